"""MAP estimation of the latent template-to-modality transforms.

With Laplace noise on every observed log-space registration and a Laplace
prior on the sum of the latents, the negative log posterior for rigid
parameter ``j`` is

    sum_k |R_k^j - (W T^j)_k| + (b_M / b_Z) |sum_n T_n^j|

i.e. six independent least-absolute-deviations problems. They are solved by
iteratively reweighted least squares started from the L2 solution.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, Unidentifiable
from .graph import build_design_matrix, check_connectivity


@dataclass(frozen=True)
class InferenceConfig:
    b_ratio: float = 1.0
    irls_epsilon: float = 1e-8
    max_iters: int = 500
    tol: float = 1e-10
    hard_center: bool = False

    def __post_init__(self):
        if not self.b_ratio > 0:
            raise InvalidArgument(f"b_ratio must be positive, got {self.b_ratio}")
        if not self.irls_epsilon > 0:
            raise InvalidArgument(f"irls_epsilon must be positive, got {self.irls_epsilon}")
        if not self.tol > 0:
            raise InvalidArgument(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise InvalidArgument(f"max_iters must be at least 1, got {self.max_iters}")


@dataclass(frozen=True, eq=False)
class LADResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)  # smoothed objective per iteration


@dataclass(frozen=True, eq=False)
class LatentSolution:
    latents: np.ndarray    # (N, 6) tangent vectors T_n, template -> modality n
    residuals: np.ndarray  # (K, 6) R_k - (W T)_k
    objective: float
    iterations: int
    converged: bool
    histories: list = field(default_factory=list)


def smoothed_abs(r, eps):
    """|r| with a quadratic cap below ``eps``; IRLS descends this exactly."""
    a = np.abs(r)
    return np.where(a >= eps, a, r * r / (2 * eps) + eps / 2)


def _stack(design, y, penalty_rows, penalty_weight):
    A = np.atleast_2d(np.asarray(design, dtype=float))
    b = np.asarray(y, dtype=float)
    if b.ndim == 2 and b.shape[1] == 1:
        b = b[:, 0]
    c = np.ones(len(b))
    if penalty_rows is not None:
        P = np.atleast_2d(np.asarray(penalty_rows, dtype=float))
        A = np.vstack([A, P])
        b = np.concatenate([b, np.zeros((len(P),) + b.shape[1:])])
        c = np.concatenate([c, np.broadcast_to(np.asarray(penalty_weight, dtype=float), len(P))])
    if A.shape[0] != len(b):
        raise InvalidArgument(f"design has {A.shape[0]} rows but y has {len(b)} entries")
    if np.linalg.matrix_rank(A[c > 0]) < A.shape[1]:
        raise Unidentifiable(f"stacked system has rank < {A.shape[1]}; problem is unidentifiable")
    return A, b, c


def _weighted_lstsq(A, b, w):
    s = np.sqrt(w)
    return np.linalg.lstsq(A * s[:, None], b * s.reshape((-1,) + (1,) * (b.ndim - 1)), rcond=None)[0]


def solve_l2(design, y, penalty_rows=None, penalty_weight=1.0):
    """Weighted least squares counterpart of :func:`solve_lad`."""
    A, b, c = _stack(design, y, penalty_rows, penalty_weight)
    return _weighted_lstsq(A, b, c)


def solve_lad(design, y, penalty_rows=None, penalty_weight=1.0, cfg=None):
    """Minimise ``sum|y - A x| + sum weight * |P x|`` by IRLS.

    Returns the best iterate; ``converged`` is False if the step size never
    fell below ``cfg.tol`` within ``cfg.max_iters`` reweightings.
    """
    cfg = cfg or InferenceConfig()
    A, b, c = _stack(design, y, penalty_rows, penalty_weight)
    eps = cfg.irls_epsilon

    x = _weighted_lstsq(A, b, c)
    r = b - A @ x
    history = [float(c @ smoothed_abs(r, eps))]
    best_x, best_obj = x, float(c @ np.abs(r))
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        x_new = _weighted_lstsq(A, b, c / np.maximum(np.abs(r), eps))
        step = np.max(np.abs(x_new - x))
        x = x_new
        r = b - A @ x
        history.append(float(c @ smoothed_abs(r, eps)))
        obj = float(c @ np.abs(r))
        if obj <= best_obj:
            best_x, best_obj = x, obj
        if step < cfg.tol:
            converged = True
            break
    if converged:
        best_x, best_obj = x, float(c @ np.abs(r))
    return LADResult(best_x, best_obj, it, converged, history)


def _check_obs(obs):
    if obs.logR is None:
        raise InvalidArgument("observation set carries no observed transforms")
    if obs.k < 1:
        raise InvalidArgument("need at least one observation")
    check_connectivity(obs)


def _reduced_design(W):
    # hard centering: T_last = -sum(T_rest)
    return W[:, :-1] - W[:, -1:]


def _expand(x):
    return np.append(x, -np.sum(x))


def infer_latents(obs, cfg=None):
    """Laplacian MAP latents for every rigid parameter independently."""
    cfg = cfg or InferenceConfig()
    _check_obs(obs)
    W = obs.W
    T = np.zeros((obs.n, 6))
    objective, iterations, converged, histories = 0.0, 0, True, []
    for j in range(6):
        y = obs.logR[:, j]
        if cfg.hard_center:
            res = solve_lad(_reduced_design(W), y, cfg=cfg)
            T[:, j] = _expand(res.x)
        else:
            res = solve_lad(W, y, np.ones((1, obs.n)), cfg.b_ratio, cfg=cfg)
            T[:, j] = res.x
        objective += res.objective
        iterations = max(iterations, res.iterations)
        converged = converged and res.converged
        histories.append(res.history)
    residuals = obs.logR - W @ T
    return LatentSolution(T, residuals, objective, iterations, converged, histories)


def least_squares_latents(obs):
    """Zero-sum L2 latents: the Gaussian-noise counterpart of :func:`infer_latents`."""
    _check_obs(obs)
    x = solve_l2(_reduced_design(obs.W), obs.logR)
    T = np.vstack([x, -x.sum(axis=0)])
    r = obs.logR - obs.W @ T
    return LatentSolution(T, r, float(np.sum(r * r)), 1, True)


def anchor_latents(obs, anchor=0):
    """Centred star solution from only the edges touching ``anchor``.

    This is what registering every modality to one reference image gives,
    re-expressed around the centre for comparison with the graph estimate.
    """
    keep = [k for k, p in enumerate(obs.pairs) if anchor in p]
    sub = build_design_matrix(obs.n, [obs.pairs[k] for k in keep], obs.logR[keep])
    _check_obs(sub)
    x = solve_l2(_reduced_design(sub.W), sub.logR)
    T = np.vstack([x, -x.sum(axis=0)])
    r = obs.logR - obs.W @ T
    return LatentSolution(T, r, float(np.sum(np.abs(r[keep]))), 1, True)
