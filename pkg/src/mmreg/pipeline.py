"""Session-level pipeline: manifests, registration, template resampling, synthesis, benchmark.

On-disk layout of a session (what ``synth_to_disk`` writes and ``load_manifest`` reads)::

    manifest.json              {"session_id": ..., "entries": [...]}
    regions.json               (synthetic sessions) SUVr regions for the phantom labels
    truth.json                 (synthetic sessions) ground-truth latents
    <modality>.nii.gz          intensity image, 3D or 4D
    <modality>_labels.nii.gz   integer parcellation on the same grid

Entry paths are relative to the manifest's directory. ``register_session``
writes ``<out>/<session_id>/transforms/<modality>.json`` plus ``solution.json``.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import se3
from .errors import DisconnectedGraph, InvalidArgument, MMRegError
from .graph import SessionGraph, all_pairs, build_design_matrix, check_connectivity
from .infer import InferenceConfig, anchor_latents, infer_latents, least_squares_latents
from .pairwise import register_pair
from .phantom import SplitMix64, corrupt_observations, exact_observations, make_session, sample_latents
from .resample import TemplateSpace, define_template, resample_to_template
from .volio import average_frames, read_nifti, write_nifti

log = logging.getLogger("mmreg")

FRAME_MODES = ("midpoint", "average", "none")
ROLES = ("anchor", "other")
CONVENTION = "template_to_image"
PARAM_NAMES = ("w1", "w2", "w3", "u1", "u2", "u3")


def kv(**fields):
    """One-line ``key=value`` diagnostic; values with spaces are JSON-quoted."""
    parts = []
    for key, value in fields.items():
        text = str(value)
        if not text or any(c in text for c in ' "=\n'):
            text = json.dumps(text)
        parts.append(f"{key}={text}")
    return " ".join(parts)


class PairError(MMRegError):
    """A module error raised while handling one modality pair."""

    def __init__(self, pair, cause):
        self.pair = pair
        self.cause = cause
        super().__init__(f"pair {pair[0]}->{pair[1]}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class ManifestEntry:
    modality: str
    image: Path
    labels: Path
    role: str = "other"
    frames: str = "none"


@dataclass(frozen=True)
class SessionManifest:
    session_id: str
    entries: tuple

    def __post_init__(self):
        if len(self.entries) < 2:
            raise InvalidArgument(f"session {self.session_id!r} needs at least 2 modalities, "
                                  f"got {len(self.entries)}")
        SessionGraph(self.modalities)  # uniqueness
        anchors = [e.modality for e in self.entries if e.role == "anchor"]
        if len(anchors) != 1:
            raise InvalidArgument(f"session {self.session_id!r} needs exactly one anchor, found {anchors}")
        for e in self.entries:
            if e.role not in ROLES:
                raise InvalidArgument(f"{e.modality}: role must be one of {ROLES}, got {e.role!r}")
            if e.frames not in FRAME_MODES:
                raise InvalidArgument(f"{e.modality}: frames must be one of {FRAME_MODES}, got {e.frames!r}")

    @property
    def modalities(self):
        return tuple(e.modality for e in self.entries)

    @property
    def anchor(self):
        return next(e.modality for e in self.entries if e.role == "anchor")

    def entry(self, modality):
        return self.entries[self.modalities.index(modality)]

    def check_paths(self):
        for e in self.entries:
            for p in (e.image, e.labels):
                if not p.is_file():
                    raise InvalidArgument(f"{e.modality}: file not found: {p}")


def parse_manifest(obj, base="."):
    base = Path(base)
    try:
        entries = tuple(ManifestEntry(str(e["modality"]), base / e["image"], base / e["labels"],
                                      e.get("role", "other"), e.get("frames", "none"))
                        for e in obj["entries"])
        return SessionManifest(str(obj["session_id"]), entries)
    except (KeyError, TypeError) as exc:
        raise InvalidArgument(f"malformed manifest: missing or invalid field {exc}") from exc


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidArgument(f"manifest not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"manifest {path} is not valid JSON: {exc}") from exc
    return parse_manifest(obj, path.parent)


def resolve_pairs(manifest, spec="all"):
    """Index pairs from ``"all"`` or a comma list like ``"T1w-PET,PET-fMRI"``."""
    mods = manifest.modalities
    if spec in (None, "all"):
        return all_pairs(len(mods))
    pairs = []
    for item in spec.split(","):
        names = item.strip().split("-")
        if len(names) != 2 or not all(n in mods for n in names):
            raise InvalidArgument(f"bad pair {item!r}; expected REF-TGT with modalities from {mods}")
        pairs.append((mods.index(names[0]), mods.index(names[1])))
    return pairs


@dataclass(frozen=True, eq=False)
class Registration:
    manifest: SessionManifest
    observations: object   # ObservationSet with logR filled
    solution: object       # LatentSolution
    template: TemplateSpace
    config: InferenceConfig


def register_session(manifest, cfg=None, pairs="all", jobs=1):
    """Pairwise centroid registrations followed by latent inference."""
    cfg = cfg or InferenceConfig()
    manifest.check_paths()
    mods = manifest.modalities
    index_pairs = resolve_pairs(manifest, pairs)
    obs = build_design_matrix(SessionGraph(mods), index_pairs)
    try:
        check_connectivity(obs)
    except DisconnectedGraph as exc:
        named = [[mods[i] for i in c] for c in exc.components]
        desc = ", ".join("{" + ",".join(c) + "}" for c in named)
        raise DisconnectedGraph(exc.components, f"observation graph is disconnected; components: {desc}")
    labels = {m: read_nifti(manifest.entry(m).labels, labels=True) for m in mods}

    def one(pair):
        ref, tgt = mods[pair[0]], mods[pair[1]]
        try:
            return register_pair(labels[ref], labels[tgt])
        except MMRegError as exc:
            raise PairError((ref, tgt), exc) from exc

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        logR = np.array(list(pool.map(one, index_pairs)))
    obs = obs.with_observations(logR)
    solution = infer_latents(obs, cfg)
    anchor = manifest.anchor
    anchor_img = read_nifti(manifest.entry(anchor).image)
    template = define_template({anchor: anchor_img}, {anchor: solution.latents[mods.index(anchor)]}, anchor)
    return Registration(manifest, obs, solution, template, cfg)


def _floats(a):
    return [float(x) for x in np.ravel(a)]


def _matrix(M):
    return [_floats(row) for row in M]


def dump_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return text


def write_registration(reg, out_dir):
    """Write transform files and the solution report; returns the session directory."""
    m = reg.manifest
    root = Path(out_dir) / m.session_id
    (root / "transforms").mkdir(parents=True, exist_ok=True)
    sol = reg.solution
    for i, mod in enumerate(m.modalities):
        v = sol.latents[i]
        dump_json({"modality": mod, "convention": CONVENTION, "log": _floats(v),
                   "matrix": _matrix(se3.exp_map(v))}, root / "transforms" / f"{mod}.json")
    mods = m.modalities
    report = {
        "session_id": m.session_id,
        "modalities": list(mods),
        "anchor": m.anchor,
        "convention": CONVENTION,
        "latents": {mod: _floats(sol.latents[i]) for i, mod in enumerate(mods)},
        "edges": [{"ref": mods[a], "tgt": mods[b], "observation": _floats(reg.observations.logR[k]),
                   "residual": _floats(sol.residuals[k])}
                  for k, (a, b) in enumerate(reg.observations.pairs)],
        "objective": float(sol.objective),
        "iterations": int(sol.iterations),
        "converged": bool(sol.converged),
        "config": {"b_ratio": reg.config.b_ratio, "hard_center": reg.config.hard_center,
                   "irls_epsilon": reg.config.irls_epsilon, "max_iters": reg.config.max_iters,
                   "tol": reg.config.tol},
        "template": {"source_modality": reg.template.source_modality, "dims": list(reg.template.dims),
                     "affine": _matrix(reg.template.affine)},
    }
    dump_json(report, root / "solution.json")
    return root


def load_solution(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidArgument(f"solution file not found: {path}")
    obj = json.loads(path.read_text(encoding="utf-8"))
    try:
        tpl = obj["template"]
        template = TemplateSpace(tuple(tpl["dims"]), np.array(tpl["affine"]), tpl["source_modality"])
        latents = {m: np.array(v, dtype=float) for m, v in obj["latents"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgument(f"malformed solution file {path}: {exc}") from exc
    return template, latents


def prepare_image(vol, frames):
    """Frame handling before resampling: ``average`` collapses, others keep the series."""
    return average_frames(vol) if frames == "average" else vol


def resample_session(manifest, template, latents, out_dir, method="trilinear"):
    """Write every modality and its label map on the template grid."""
    manifest.check_paths()
    missing = [m for m in manifest.modalities if m not in latents]
    if missing:
        raise InvalidArgument(f"solution has no latent for modalities {missing}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for e in manifest.entries:
        v = latents[e.modality]
        img = prepare_image(read_nifti(e.image), e.frames)
        write_nifti(resample_to_template(img, v, template, method), out / f"{e.modality}.nii.gz")
        lab = resample_to_template(read_nifti(e.labels, labels=True), v, template, "nearest")
        write_nifti(lab, out / f"{e.modality}_labels.nii.gz")
        written.append(e.modality)
    return written


def synth_to_disk(spec, out_dir, session_id=None):
    """Render a phantom session in the manifest layout, with a ground-truth sidecar."""
    session = make_session(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sid = session_id or f"synth-{spec.seed}"
    entries = []
    for i, mod in enumerate(session.modalities):
        write_nifti(session.volumes[mod], out / f"{mod}.nii.gz")
        write_nifti(session.labels[mod], out / f"{mod}_labels.nii.gz")
        entries.append({"modality": mod, "image": f"{mod}.nii.gz", "labels": f"{mod}_labels.nii.gz",
                        "role": "anchor" if i == 0 else "other", "frames": session.frames[mod]})
    dump_json({"session_id": sid, "entries": entries}, out / "manifest.json")
    # phantom structures are numbered 2..n_labels; the first plays the reference region
    dump_json({"regions": [{"name": f"structure_{l}", "labels": [l], "reference": l == 2}
                           for l in range(2, spec.n_labels + 1)]}, out / "regions.json")
    dump_json({"session_id": sid, "convention": CONVENTION, "spec": spec.to_dict(),
               "latents": {m: _floats(session.latents[i]) for i, m in enumerate(session.modalities)}},
              out / "truth.json")
    return session


def parse_outliers(spec):
    """``"ref-tgt:param:delta,..."`` into ``[((ref, tgt), offset6), ...]``."""
    if spec is None or spec.strip() in ("", "none"):
        return []
    edges = []
    for item in spec.split(","):
        try:
            pair, param, delta = item.strip().split(":")
            ref, tgt = (int(x) for x in pair.split("-"))
            param = int(param) if param.isdigit() else PARAM_NAMES.index(param)
            offset = np.zeros(6)
            offset[param] = float(delta)
        except (ValueError, IndexError) as exc:
            raise InvalidArgument(f"bad outlier spec {item!r}; expected REF-TGT:PARAM:DELTA") from exc
        edges.append(((ref, tgt), tuple(offset)))
    return edges


ESTIMATORS = {
    "graph-L1": lambda obs: infer_latents(obs).latents,
    "graph-L2": lambda obs: least_squares_latents(obs).latents,
    "anchor-T1": lambda obs: anchor_latents(obs, 0).latents,
}


def bench_rows(n, noise, outliers, reps, seed0=0):
    """Monte-Carlo over observation-level phantoms.

    Replicate ``s`` draws latents from stream ``2 s`` and noise from stream
    ``2 s + 1``; each row reports, per rigid parameter, the Euclidean norm of
    the latent error over the modalities.
    """
    rows = []
    for rep in range(reps):
        seed = seed0 + rep
        truth = sample_latents(n, SplitMix64(2 * seed))
        obs = corrupt_observations(exact_observations(truth), outliers, noise, seed=2 * seed + 1)
        for name, est in ESTIMATORS.items():
            err = np.linalg.norm(est(obs) - truth, axis=0)
            rows.append((seed, name, *err.tolist()))
    return rows


def bench_csv(rows):
    header = ",".join(["seed", "estimator"] + [f"err_{p}" for p in PARAM_NAMES])
    lines = [header] + [",".join([str(r[0]), r[1]] + [repr(float(x)) for x in r[2:]]) for r in rows]
    return "\r\n".join(lines) + "\r\n"


def env_jobs(default):
    value = os.environ.get("JUMP_JOBS")
    if value is None:
        return default
    try:
        jobs = int(value)
    except ValueError as exc:
        raise InvalidArgument(f"JUMP_JOBS must be an integer, got {value!r}") from exc
    if jobs < 1:
        raise InvalidArgument(f"JUMP_JOBS must be at least 1, got {jobs}")
    return jobs
