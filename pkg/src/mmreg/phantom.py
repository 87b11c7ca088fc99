"""Synthetic multimodal sessions with known latent transforms.

Random numbers come from a splitmix64 stream so fixtures can be regenerated
bit-for-bit from the seed alone, in any language:

    state_i = seed + i * 0x9E3779B97F4A7C15        (mod 2**64, i = 1, 2, ...)
    z = state_i
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9       (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB       (mod 2**64)
    out_i = z ^ (z >> 31)

Uniforms are ``((out >> 11) + 0.5) / 2**53``, strictly inside (0, 1).
Laplace(0, b) draws use the inverse CDF
``-b * sign(u - 1/2) * log(1 - 2 |u - 1/2|)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import se3
from .errors import InvalidSpec
from .graph import all_pairs, build_design_matrix
from .volio import LabelVolume, Volume

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)

DEFAULT_MODALITIES = ("T1w", "PET", "fMRI")
# frames and frame handling per modality name; unknown names are static
FRAMES = {"PET": (3, "average"), "fMRI": (4, "midpoint")}


class SplitMix64:
    def __init__(self, seed):
        self.state = np.uint64(int(seed) % 2 ** 64)

    def next_u64(self, n):
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64)
            z = self.state + steps * GOLDEN
            self.state = self.state + np.uint64(n) * GOLDEN
            z = (z ^ (z >> np.uint64(30))) * MIX1
            z = (z ^ (z >> np.uint64(27))) * MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, n):
        return ((self.next_u64(n) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53

    def laplace(self, n, scale):
        u = self.uniform(n) - 0.5
        return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


@dataclass(frozen=True)
class PhantomSpec:
    n_modalities: int = 3
    grid_dims: tuple = (80, 80, 80)
    voxel_size: float = 1.5
    n_labels: int = 6
    noise_scale: float = 0.0
    outlier_edges: tuple = ()
    seed: int = 0
    max_rotation: float = 0.2
    max_translation: float = 10.0
    modalities: tuple = field(default=None)

    def __post_init__(self):
        if self.n_modalities < 2:
            raise InvalidSpec(f"n_modalities must be at least 2, got {self.n_modalities}")
        if not 4 <= self.n_labels <= len(BLOB_LAYOUT) + 1:
            raise InvalidSpec(f"n_labels must be in [4, {len(BLOB_LAYOUT) + 1}], got {self.n_labels}")
        dims = tuple(int(d) for d in self.grid_dims)
        if len(dims) != 3:
            raise InvalidSpec(f"grid_dims must have 3 entries, got {dims}")
        object.__setattr__(self, "grid_dims", dims)
        if self.voxel_size <= 0 or self.noise_scale < 0:
            raise InvalidSpec("voxel_size must be positive and noise_scale non-negative")
        if self.modalities is None:
            names = DEFAULT_MODALITIES[:self.n_modalities]
            names += tuple(f"mod{i}" for i in range(len(names), self.n_modalities))
            object.__setattr__(self, "modalities", names)
        elif len(self.modalities) != self.n_modalities:
            raise InvalidSpec("modalities list does not match n_modalities")
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "outlier_edges", tuple(
            (e if isinstance(e, int) else tuple(e), tuple(float(x) for x in off))
            for e, off in self.outlier_edges))
        # the brain plus the largest possible motion must stay inside the grid
        half_fov = 0.5 * (min(dims) - 1) * self.voxel_size
        reach = BRAIN_SIZE * (1.0 + self.max_rotation) + self.max_translation
        if reach > half_fov:
            raise InvalidSpec(f"grid too small: phantom reaches {reach:.1f} mm, half field of view "
                              f"is {half_fov:.1f} mm")
        if 2 * BLOB_RADIUS < 6 * self.voxel_size:
            raise InvalidSpec(f"voxel size {self.voxel_size} mm too coarse for {self.n_labels} labels")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"unknown phantom spec fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("grid_dims", "modalities"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items() if k != "outlier_edges"} | {
            "outlier_edges": [[e if isinstance(e, int) else list(e), list(off)]
                              for e, off in self.outlier_edges]}


# brain ellipsoid semi-axes (mm) and sub-structure layout in template world
BRAIN_SIZE = 40.0
BRAIN_AXES = np.array([40.0, 34.0, 30.0])
BLOB_RADIUS = 13.0
BLOB_LAYOUT = np.array([
    [18.0, 14.0, 9.0], [-18.0, 12.0, -9.0], [16.0, -15.0, -8.0], [-17.0, -13.0, 10.0],
    [0.0, 2.0, 17.0], [0.0, 0.0, -16.0], [26.0, 0.0, 0.0], [-27.0, 0.0, 0.0],
])


@dataclass(frozen=True, eq=False)
class Session:
    modalities: tuple
    volumes: dict       # modality -> Volume (possibly 4D)
    labels: dict        # modality -> LabelVolume
    latents: np.ndarray  # (N, 6), template -> modality, zero sum
    frames: dict        # modality -> "none" | "midpoint" | "average"


def base_labels(points, n_labels):
    """Analytic template-space parcellation evaluated at world points (..., 3)."""
    out = np.zeros(points.shape[:-1], dtype=np.int32)
    out[np.sum((points / BRAIN_AXES) ** 2, axis=-1) <= 1.0] = 1
    for i, centre in enumerate(BLOB_LAYOUT[:n_labels - 1]):
        out[np.sum((points - centre) ** 2, axis=-1) <= BLOB_RADIUS ** 2] = i + 2
    return out


def grid_affine(dims, voxel_size):
    A = np.diag([voxel_size] * 3 + [1.0])
    A[:3, 3] = -0.5 * (np.array(dims) - 1) * voxel_size
    return A


def sample_latents(n, rng, max_rotation=0.2, max_translation=10.0):
    """``n`` zero-sum tangent vectors with bounded rotation and translation norms."""
    raw = (rng.uniform(6 * n).reshape(n, 6) - 0.5) * 2.0
    raw[:, :3] *= max_rotation / np.sqrt(3)
    raw[:, 3:] *= max_translation / np.sqrt(3)
    T = raw - raw.mean(axis=0)
    for sl, bound in ((slice(0, 3), max_rotation), (slice(3, 6), max_translation)):
        peak = np.max(np.linalg.norm(T[:, sl], axis=1))
        if peak > bound:
            T[:, sl] *= bound / peak
    # recentre exactly after scaling
    return T - T.mean(axis=0)


def make_session(spec):
    """Render every modality of a synthetic session from one analytic phantom."""
    rng = SplitMix64(spec.seed)
    n = spec.n_modalities
    latents = sample_latents(n, rng, spec.max_rotation, spec.max_translation)
    affine = grid_affine(spec.grid_dims, spec.voxel_size)
    idx = np.indices(spec.grid_dims, dtype=float).transpose(1, 2, 3, 0)
    world = idx @ affine[:3, :3].T + affine[:3, 3]
    contrasts = rng.uniform(n * (spec.n_labels + 1)).reshape(n, spec.n_labels + 1)
    volumes, labels, frames = {}, {}, {}
    for m, name in enumerate(spec.modalities):
        # image world -> template world is the inverse latent
        to_template = se3.exp_map(-latents[m])
        lab = base_labels(se3.apply_point(to_template, world), spec.n_labels)
        lut = 0.2 + 0.8 * contrasts[m]
        lut[0] = 0.0
        img = gaussian_filter(lut[lab], sigma=1.0, mode="constant")
        n_frames, handling = FRAMES.get(name, (1, "none"))
        if n_frames > 1:
            drift = 1.0 + 0.05 * (rng.uniform(n_frames) - 0.5)
            img = img[..., None] * drift
        volumes[name] = Volume(img.astype(np.float32), affine)
        labels[name] = LabelVolume(lab, affine)
        frames[name] = handling
    return Session(tuple(spec.modalities), volumes, labels, latents, frames)


def exact_observations(latents, pairs=None):
    """Noise-free log-space observations under the linear model ``R = W T``."""
    latents = np.asarray(latents, dtype=float)
    n = len(latents)
    obs = build_design_matrix(n, pairs if pairs is not None else all_pairs(n))
    return obs.with_observations(obs.W @ latents)


def corrupt_observations(obs, outlier_edges=(), noise_scale=0.0, seed=0):
    """Add i.i.d. Laplace(0, noise_scale) noise and gross per-edge offsets."""
    R = obs.logR.copy()
    if noise_scale > 0:
        R += SplitMix64(seed).laplace(R.size, noise_scale).reshape(R.shape)
    for edge, offset in outlier_edges:
        k = edge if isinstance(edge, (int, np.integer)) else _edge_index(obs, edge)
        R[k] += np.asarray(offset, dtype=float)
    return obs.with_observations(R)


def _edge_index(obs, edge):
    key = frozenset(int(e) for e in edge)
    for k, pair in enumerate(obs.pairs):
        if frozenset(pair) == key:
            return k
    raise InvalidSpec(f"edge {tuple(edge)} is not among the observations")
