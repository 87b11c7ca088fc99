"""Pairwise rigid registration of two parcellations.

Each label contributes its world-space centroid, weighted by its volume; the
rigid transform between two images is the weighted Procrustes (Kabsch) fit of
the centroids of the labels both images share.
"""

from dataclasses import dataclass

import numpy as np

from . import se3
from .errors import DegenerateGeometry, EmptyParcellation, InsufficientCorrespondence
from .volio import voxel_to_world


@dataclass(frozen=True, eq=False)
class CentroidSet:
    labels: np.ndarray     # (L,) sorted non-zero labels
    centroids: np.ndarray  # (L, 3) world mm
    weights: np.ndarray    # (L,) mm^3

    def __len__(self):
        return len(self.labels)

    def as_dict(self):
        return {int(l): (c, float(w)) for l, c, w in zip(self.labels, self.centroids, self.weights)}


def label_centroids(lv):
    """Per-label world centroid and volume (voxel count x voxel volume)."""
    flat = lv.data.ravel()
    fg = np.flatnonzero(flat)
    if fg.size == 0:
        raise EmptyParcellation("parcellation has no foreground labels")
    labels, inverse, counts = np.unique(flat[fg], return_inverse=True, return_counts=True)
    idx = np.stack(np.unravel_index(fg, lv.dims), axis=1).astype(float)
    # centroid of voxel indices first, then one affine map (the map is affine)
    sums = np.zeros((len(labels), 3))
    for axis in range(3):
        sums[:, axis] = np.bincount(inverse, weights=idx[:, axis], minlength=len(labels))
    centroids = voxel_to_world(lv, sums / counts[:, None])
    voxel_volume = abs(np.linalg.det(lv.affine[:3, :3]))
    return CentroidSet(labels, centroids, counts * voxel_volume)


def _shared(src, dst):
    labels, i, j = np.intersect1d(src.labels, dst.labels, return_indices=True)
    if len(labels) < 3:
        raise InsufficientCorrespondence(
            f"need at least 3 shared labels for a rigid fit, found {len(labels)}")
    weights = np.sqrt(src.weights[i] * dst.weights[j])
    return src.centroids[i], dst.centroids[j], weights


def fit_rigid(P, Q, w=None):
    """Weighted Kabsch: rigid T minimising sum_l w_l |T(P_l) - Q_l|^2."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    w = np.ones(len(P)) if w is None else np.asarray(w, dtype=float)
    w = w / w.sum()
    cp = w @ P
    cq = w @ Q
    Pc, Qc = P - cp, Q - cq
    sv = np.linalg.svd(np.sqrt(w)[:, None] * Pc, compute_uv=False)
    if len(sv) < 2 or sv[1] <= 1e-8 * max(sv[0], 1.0):
        raise DegenerateGeometry("corresponding points are collinear; rotation is undetermined")
    H = (w[:, None] * Pc).T @ Qc
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = cq - R @ cp
    return T


def weighted_procrustes(src, dst):
    """Rigid transform mapping ``src`` centroids onto ``dst`` centroids."""
    P, Q, w = _shared(src, dst)
    return fit_rigid(P, Q, w)


def procrustes_objective(T, src, dst):
    P, Q, w = _shared(src, dst)
    r = se3.apply_point(T, P) - Q
    return float(w @ np.sum(r * r, axis=1))


def register_pair(ref, tgt):
    """Observed log-space transform taking ``ref`` world points into ``tgt`` world."""
    return se3.log_map(weighted_procrustes(label_centroids(ref), label_centroids(tgt)))
