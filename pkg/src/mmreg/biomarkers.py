"""Downstream biomarkers: regional SUVr, confound regression, Welch t-test."""

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (CollinearConfounds, InvalidArgument, InvalidReference, InvalidSample)


@dataclass(frozen=True)
class RegionSpec:
    name: str
    labels: frozenset
    reference: bool = False

    def __post_init__(self):
        labels = frozenset(int(l) for l in self.labels)
        if not labels:
            raise InvalidArgument(f"region {self.name!r} has no labels")
        object.__setattr__(self, "labels", labels)


def parse_regions(obj):
    """Region list from the ``{"regions": [...]}`` JSON document."""
    try:
        regions = [RegionSpec(r["name"], r["labels"], bool(r.get("reference", False)))
                   for r in obj["regions"]]
    except (KeyError, TypeError) as exc:
        raise InvalidArgument(f"malformed region spec: {exc}") from exc
    _check_regions(regions)
    return regions


def load_regions(path=None):
    """Load region definitions; ``None`` gives the bundled SynthSeg mapping."""
    if path is None:
        text = resources.files("mmreg").joinpath("data/regions_default.json").read_text()
    else:
        with open(path) as f:
            text = f.read()
    return parse_regions(json.loads(text))


def _check_regions(regions):
    names = [r.name for r in regions]
    if len(set(names)) != len(names):
        raise InvalidArgument(f"duplicate region names in {names}")
    n_ref = sum(r.reference for r in regions)
    if n_ref != 1:
        raise InvalidArgument(f"exactly one reference region required, found {n_ref}")


class BiomarkerTable:
    """Rows of (session, region, value); ``None`` marks a missing value."""

    def __init__(self, rows=()):
        self.rows = []
        self._keys = set()
        for row in rows:
            self.add(*row)

    def add(self, session, region, value):
        key = (session, region)
        if key in self._keys:
            raise InvalidArgument(f"duplicate biomarker row {key}")
        self._keys.add(key)
        self.rows.append((session, region, value))

    def extend(self, other):
        for row in other.rows:
            self.add(*row)

    def value(self, session, region):
        for s, r, v in self.rows:
            if (s, r) == (session, region):
                return v
        raise KeyError((session, region))

    def to_csv(self, path=None, value_name="suvr"):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["session", "region", value_name])
        for s, r, v in self.rows:
            writer.writerow([s, r, "" if v is None else repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as f:
                f.write(text)
        return text


def _same_grid(a, b):
    return a.dims == b.dims and np.allclose(a.affine, b.affine, atol=1e-6)


def suvr(pet, seg, regions, session="session"):
    """Regional mean uptake divided by the reference-region mean.

    Regions with no voxels in ``seg`` are reported as ``None``.
    """
    _check_regions(regions)
    if pet.frames != 1:
        raise InvalidArgument("SUVr needs a single-frame PET volume; average frames first")
    if not _same_grid(pet, seg):
        raise InvalidArgument("PET and segmentation are not on the same grid")
    data = pet.data.reshape(pet.dims)
    ref = next(r for r in regions if r.reference)

    def region_mean(region):
        mask = np.isin(seg.data, list(region.labels))
        return data[mask].mean() if mask.any() else None

    ref_mean = region_mean(ref)
    if ref_mean is None or not ref_mean > 0:
        raise InvalidReference(f"reference region {ref.name!r} has mean {ref_mean}; must be positive")
    table = BiomarkerTable()
    for region in regions:
        m = region_mean(region)
        table.add(session, region.name, None if m is None else float(m / ref_mean))
    return table


def mean_signals(series, seg, groups):
    """Mean time course (T x G) of a 4D volume inside each label group."""
    data = series.data if series.data.ndim == 4 else series.data[..., None]
    out = np.zeros((data.shape[3], len(groups)))
    for g, labels in enumerate(groups):
        mask = np.isin(seg.data, list(labels))
        if not mask.any():
            raise InvalidArgument(f"label group {sorted(labels)} is empty")
        out[:, g] = data[mask].mean(axis=0)
    return out


def nuisance_regress(series, confounds):
    """Residuals of an OLS fit of ``[confounds, 1]`` to every column of ``series``."""
    Y = np.asarray(series, dtype=float)
    C = np.asarray(confounds, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    T = Y.shape[0]
    if C.shape[0] != T:
        raise InvalidArgument(f"series has {T} time points, confounds have {C.shape[0]}")
    X = np.column_stack([C, np.ones(T)])
    if T <= X.shape[1]:
        raise InvalidArgument(f"need more than {X.shape[1]} time points, got {T}")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise CollinearConfounds("confounds plus intercept are rank deficient")
    beta = np.linalg.lstsq(X, Y, rcond=None)[0]
    R = Y - X @ beta
    return R[:, 0] if squeeze else R


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 1000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise InvalidArgument("betainc needs a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise InvalidArgument(f"betainc needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_cdf(t, dof):
    """Student t cumulative distribution function."""
    if not dof > 0:
        raise InvalidArgument(f"degrees of freedom must be positive, got {dof}")
    if t == 0:
        return 0.5
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc(0.5 * dof, 0.5, dof / (dof + t * t))
    return 1.0 - tail if t > 0 else tail


def t_sf_two_sided(t, dof):
    if t == 0:
        return 1.0
    return betainc(0.5 * dof, 0.5, dof / (dof + t * t))


def welch_ttest(a, b):
    """Welch's unequal-variance t-test: returns (t, two-sided p, dof)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) < 2 or len(b) < 2:
        raise InvalidSample(f"each sample needs at least 2 values, got {len(a)} and {len(b)}")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va <= 0 or vb <= 0:
        raise InvalidSample("samples must have positive variance")
    sa, sb = va / len(a), vb / len(b)
    t = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    dof = (sa + sb) ** 2 / (sa ** 2 / (len(a) - 1) + sb ** 2 / (len(b) - 1))
    return float(t), float(t_sf_two_sided(t, dof)), float(dof)
