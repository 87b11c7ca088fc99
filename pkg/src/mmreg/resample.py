"""Session template space and pull-back resampling into it.

The template grid is the anchor (T1w) grid. Its world frame is the anchor's
frame mapped back through the anchor latent, so the template sits at the
centre of the modality graph rather than at the anchor pose. Each latent
maps template world coordinates to modality world coordinates, which is
exactly the direction needed for pull-back sampling.
"""

from dataclasses import dataclass

import numpy as np

from . import se3
from .errors import InvalidArgument, MissingAnchor
from .volio import LabelVolume, Volume

# fractional voxel coordinates this close to the lattice are treated as on it
SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class TemplateSpace:
    dims: tuple
    affine: np.ndarray
    source_modality: str

    def __post_init__(self):
        A = np.asarray(self.affine, dtype=float)
        if abs(np.linalg.det(A[:3, :3])) <= 1e-12:
            raise InvalidArgument("template affine is singular")
        object.__setattr__(self, "affine", A)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


def define_template(volumes, latents, anchor="T1w"):
    """Template on the anchor grid, world frame moved by ``exp(-T_anchor)``.

    ``volumes`` and ``latents`` map modality ID to volume / tangent vector.
    """
    if anchor not in volumes or anchor not in latents:
        raise MissingAnchor(f"anchor modality {anchor!r} not present in session")
    vol = volumes[anchor]
    affine = se3.compose(se3.invert(se3.exp_map(latents[anchor])), vol.affine)
    return TemplateSpace(vol.dims, affine, anchor)


def _snap(q):
    r = np.round(q)
    return np.where(np.abs(q - r) < SNAP, r, q)


def interpolate_trilinear(data, q, fill=0.0):
    """Trilinear samples of a 3D array at voxel coordinates ``q`` (..., 3).

    Points outside [0, dim - 1] on any axis get ``fill``.
    """
    data = np.asarray(data)
    q = _snap(np.asarray(q, dtype=float))
    shape = np.array(data.shape[:3])
    inside = np.all((q >= 0) & (q <= shape - 1), axis=-1)
    qi = np.where(inside[..., None], q, 0.0)
    i0 = np.floor(qi).astype(np.intp)
    i0 = np.minimum(i0, shape - 1)
    i1 = np.minimum(i0 + 1, shape - 1)
    f = qi - i0
    out = np.zeros(q.shape[:-1], dtype=float)
    for dx in (0, 1):
        x = i1[..., 0] if dx else i0[..., 0]
        wx = f[..., 0] if dx else 1.0 - f[..., 0]
        for dy in (0, 1):
            y = i1[..., 1] if dy else i0[..., 1]
            wy = f[..., 1] if dy else 1.0 - f[..., 1]
            for dz in (0, 1):
                z = i1[..., 2] if dz else i0[..., 2]
                wz = f[..., 2] if dz else 1.0 - f[..., 2]
                w = wx * wy * wz
                # skip zero weights so lattice points reproduce values exactly
                out += np.where(w != 0, w * data[x, y, z], 0.0)
    return np.where(inside, out, fill)


def interpolate_nearest(data, q, fill=0):
    data = np.asarray(data)
    q = np.asarray(q, dtype=float)
    idx = np.floor(q + 0.5).astype(np.intp)
    shape = np.array(data.shape[:3])
    inside = np.all((idx >= 0) & (idx <= shape - 1), axis=-1)
    idx = np.where(inside[..., None], idx, 0)
    return np.where(inside, data[idx[..., 0], idx[..., 1], idx[..., 2]], fill)


def template_to_voxel(vol, latent, tpl):
    """Matrix taking template voxel indices to voxel indices of ``vol``."""
    return np.linalg.inv(vol.affine) @ se3.exp_map(latent) @ tpl.affine


def resample_to_template(vol, latent, tpl, method="trilinear", fill=0.0):
    """Pull ``vol`` onto the template grid through its latent transform."""
    if method not in ("trilinear", "nearest"):
        raise InvalidArgument(f"unknown interpolation method {method!r}")
    is_label = isinstance(vol, LabelVolume)
    if is_label and method != "nearest":
        raise InvalidArgument("label volumes must be resampled with nearest neighbour")
    M = template_to_voxel(vol, latent, tpl)
    idx = np.indices(tpl.dims, dtype=float).transpose(1, 2, 3, 0)
    q = idx @ M[:3, :3].T + M[:3, 3]
    if is_label:
        return LabelVolume(interpolate_nearest(vol.data, q, int(fill)), tpl.affine)
    interp = interpolate_trilinear if method == "trilinear" else interpolate_nearest
    if vol.data.ndim == 4:
        frames = [interp(vol.data[..., f], q, fill) for f in range(vol.frames)]
        return Volume(np.stack(frames, axis=3).astype(float), tpl.affine)
    return Volume(np.asarray(interp(vol.data, q, fill), dtype=float), tpl.affine)


def dice_scores(a, b, labels=None):
    """Per-label Dice overlap between two label arrays on the same grid."""
    a = np.asarray(getattr(a, "data", a))
    b = np.asarray(getattr(b, "data", b))
    if labels is None:
        labels = np.union1d(np.unique(a), np.unique(b))
        labels = labels[labels != 0]
    out = {}
    for label in labels:
        ma, mb = a == label, b == label
        denom = ma.sum() + mb.sum()
        out[int(label)] = 2.0 * np.logical_and(ma, mb).sum() / denom if denom else float("nan")
    return out
