"""Session graph: N modalities around a latent template.

The template is the hub of a star-shaped spanning tree; each latent
transform ``T_n`` maps template space to modality ``n``. An observed pairwise
registration from ``ref`` to ``tgt`` is explained in log space by
``T_tgt - T_ref``, so its row of the design matrix ``W`` holds -1 at ``ref``
and +1 at ``tgt``. The template itself is not a column of ``W``.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import csr_matrix

from .errors import DisconnectedGraph, DuplicateEdge, InvalidArgument


@dataclass(frozen=True)
class SessionGraph:
    modalities: tuple

    def __post_init__(self):
        mods = tuple(str(m) for m in self.modalities)
        if len(mods) < 2:
            raise InvalidArgument(f"a session needs at least 2 modalities, got {len(mods)}")
        if len(set(mods)) != len(mods):
            raise InvalidArgument(f"modality IDs must be unique: {mods}")
        object.__setattr__(self, "modalities", mods)

    @property
    def n(self):
        return len(self.modalities)

    def index(self, modality):
        return self.modalities.index(modality)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observed log-space registrations and the design matrix explaining them."""

    n: int
    pairs: tuple                 # K (ref, tgt) index pairs
    W: np.ndarray                # (K, N)
    logR: np.ndarray = field(default=None)  # (K, 6)

    @property
    def k(self):
        return len(self.pairs)

    def with_observations(self, logR):
        logR = np.asarray(logR, dtype=float).reshape(self.k, 6)
        return ObservationSet(self.n, self.pairs, self.W, logR)


def full_pair_count(n):
    if n < 2:
        raise InvalidArgument(f"need at least 2 modalities, got {n}")
    return n * (n - 1) // 2


def all_pairs(n):
    return list(combinations(range(n), 2))


def build_design_matrix(graph, pairs, logR=None):
    """Signed incidence matrix for ``pairs``, rows in input order."""
    n = graph.n if isinstance(graph, SessionGraph) else int(graph)
    seen = set()
    W = np.zeros((len(pairs), n))
    clean = []
    for k, (ref, tgt) in enumerate(pairs):
        ref, tgt = int(ref), int(tgt)
        if not (0 <= ref < n and 0 <= tgt < n):
            raise InvalidArgument(f"pair ({ref}, {tgt}) out of range for {n} modalities")
        if ref == tgt:
            raise InvalidArgument(f"self pair ({ref}, {tgt})")
        key = frozenset((ref, tgt))
        if key in seen:
            raise DuplicateEdge(f"pair ({ref}, {tgt}) appears more than once")
        seen.add(key)
        W[k, ref] = -1.0
        W[k, tgt] = 1.0
        clean.append((ref, tgt))
    obs = ObservationSet(n, tuple(clean), W)
    return obs if logR is None else obs.with_observations(logR)


def components(obs):
    adj = np.zeros((obs.n, obs.n))
    for ref, tgt in obs.pairs:
        adj[ref, tgt] = adj[tgt, ref] = 1
    count, labels = connected_components(csr_matrix(adj), directed=False)
    return [set(np.flatnonzero(labels == c).tolist()) for c in range(count)]


def check_connectivity(obs):
    """Raise :class:`DisconnectedGraph` unless every modality is linked."""
    comps = components(obs)
    if len(comps) > 1:
        raise DisconnectedGraph(comps)
