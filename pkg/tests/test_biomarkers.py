import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from mmreg.biomarkers import (BiomarkerTable, RegionSpec, betainc, load_regions, mean_signals,
                              nuisance_regress, parse_regions, suvr, t_cdf, welch_ttest)
from mmreg.errors import (CollinearConfounds, InvalidArgument, InvalidReference, InvalidSample)
from mmreg.volio import LabelVolume, Volume


def phantom():
    seg = np.zeros((6, 6, 6), dtype=int)
    seg[:2] = 8          # reference
    seg[2:4, :3] = 3     # cortex
    seg[2:4, 3:] = 17
    seg[4:, :] = 1029
    rng = np.random.default_rng(0)
    pet = rng.uniform(0.5, 3.0, size=seg.shape)
    return Volume(pet), LabelVolume(seg)


REGIONS = [RegionSpec("ref", {8}, True), RegionSpec("cortex", {3}), RegionSpec("mixed", {17, 1029}),
           RegionSpec("absent", {99})]


def test_suvr_ratio_two():
    seg = np.zeros((2, 2, 2), dtype=int)
    seg[0] = 8
    seg[1] = 3
    pet = np.where(seg == 8, 1.0, 2.0)
    t = suvr(Volume(pet), LabelVolume(seg), REGIONS[:2])
    assert t.value("session", "cortex") == 2.0
    assert t.value("session", "ref") == 1.0


def test_suvr_against_loop():
    pet, seg = phantom()
    table = suvr(pet, seg, REGIONS, session="s1")

    def loop_mean(labels):
        vals = [pet.data[idx] for idx in np.ndindex(seg.dims) if seg.data[idx] in labels]
        return sum(vals) / len(vals)

    ref = loop_mean({8})
    assert table.value("s1", "cortex") == pytest.approx(loop_mean({3}) / ref, rel=1e-12)
    assert table.value("s1", "mixed") == pytest.approx(loop_mean({17, 1029}) / ref, rel=1e-12)
    assert table.value("s1", "absent") is None


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_suvr_scale_invariance(c):
    pet, seg = phantom()
    a = suvr(pet, seg, REGIONS)
    b = suvr(Volume(pet.data * c), seg, REGIONS)
    for (_, _, va), (_, _, vb) in zip(a.rows, b.rows):
        if va is not None:
            assert abs(va - vb) <= 1e-12 * max(1.0, abs(va))


def test_suvr_invalid_reference():
    pet, seg = phantom()
    with pytest.raises(InvalidReference):
        suvr(Volume(np.zeros(seg.dims)), seg, REGIONS)
    with pytest.raises(InvalidReference):
        suvr(pet, seg, [RegionSpec("ref", {99}, True)])


def test_suvr_grid_and_region_checks():
    pet, seg = phantom()
    with pytest.raises(InvalidArgument):
        suvr(Volume(pet.data, np.diag([2.0, 2.0, 2.0, 1.0])), seg, REGIONS)
    with pytest.raises(InvalidArgument):
        suvr(pet, seg, [RegionSpec("a", {8}), RegionSpec("b", {3})])
    with pytest.raises(InvalidArgument):
        RegionSpec("empty", set())


def test_region_json():
    regions = parse_regions({"regions": [{"name": "cb", "labels": [8, 47], "reference": True},
                                         {"name": "ctx", "labels": [3]}]})
    assert regions[0].reference and regions[1].labels == frozenset({3})
    with pytest.raises(InvalidArgument):
        parse_regions({"regions": [{"labels": [1]}]})
    default = load_regions()
    ref = [r for r in default if r.reference]
    assert [r.name for r in ref] == ["cerebellar_gm"] and ref[0].labels == {8, 47}
    assert {"neocortex", "parietal", "temporal", "cingulate"} <= {r.name for r in default}


def test_table_csv(tmp_path):
    table = BiomarkerTable([("s1", "ref", 1.0), ("s1", "absent", None)])
    with pytest.raises(InvalidArgument):
        table.add("s1", "ref", 2.0)
    text = table.to_csv(tmp_path / "out.csv")
    assert text == "session,region,suvr\r\ns1,ref,1.0\r\ns1,absent,\r\n"
    assert (tmp_path / "out.csv").read_bytes() == text.encode()


def test_regress_out_exact_confound():
    rng = np.random.default_rng(1)
    C = rng.normal(size=(40, 3))
    R = nuisance_regress(C[:, 1] * 2.5 + 4.0, C)
    assert np.max(np.abs(R)) <= 1e-10


def test_orthogonal_signal_is_untouched():
    t = np.arange(64)
    C = np.column_stack([np.cos(2 * np.pi * t / 64), np.sin(2 * np.pi * 2 * t / 64)])
    s = np.cos(2 * np.pi * 5 * t / 64)
    np.testing.assert_allclose(nuisance_regress(s, C), s, atol=1e-10)


def test_regression_matches_pseudo_inverse():
    rng = np.random.default_rng(2)
    C = rng.normal(size=(50, 3))
    Y = rng.normal(size=(50, 7)) + C @ rng.normal(size=(3, 7))
    X = np.column_stack([C, np.ones(50)])
    expected = Y - X @ (np.linalg.pinv(X.T @ X) @ X.T @ Y)
    R = nuisance_regress(Y, C)
    np.testing.assert_allclose(R, expected, atol=1e-8)
    X = np.column_stack([C, np.ones(50)])
    assert np.max(np.abs(X.T @ R)) <= 1e-8 * np.max(np.abs(Y))


def test_regression_errors():
    rng = np.random.default_rng(3)
    C = rng.normal(size=(20, 2))
    with pytest.raises(CollinearConfounds):
        nuisance_regress(rng.normal(size=20), np.column_stack([C, C[:, 0] * 2]))
    with pytest.raises(CollinearConfounds):
        nuisance_regress(rng.normal(size=20), np.column_stack([C, np.full(20, 3.0)]))
    with pytest.raises(InvalidArgument):
        nuisance_regress(rng.normal(size=3), rng.normal(size=(3, 2)))


def test_mean_signals():
    data = np.zeros((2, 2, 2, 3))
    data[0] = [1, 2, 3]
    data[1] = [5, 5, 5]
    seg = np.zeros((2, 2, 2), dtype=int)
    seg[0] = 2
    seg[1] = 41
    out = mean_signals(Volume(data), LabelVolume(seg), [{2}, {41}, {2, 41}])
    np.testing.assert_allclose(out, [[1, 5, 3], [2, 5, 3.5], [3, 5, 4]])


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.4), (10.0, 0.5, 0.9),
                                   (0.5, 40.0, 0.01), (50.0, 50.0, 0.5), (1.5, 0.5, 0.999)])
def test_betainc_against_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-10, abs=1e-300)


def test_t_cdf_reference_values():
    assert t_cdf(0.0, 3.0) == 0.5
    # dof -> infinity approaches the normal CDF: Phi(1) = 0.841344746
    assert t_cdf(1.0, 1e7) == pytest.approx(0.841344746, abs=1e-3)
    # Cauchy (dof=1): 0.5 + atan(t)/pi
    assert t_cdf(1.0, 1.0) == pytest.approx(0.75, abs=1e-12)
    # textbook critical values: t_{0.975, 10} = 2.228, t_{0.95, 5} = 2.015
    assert t_cdf(2.228, 10) == pytest.approx(0.975, abs=1e-3)
    assert t_cdf(2.015, 5) == pytest.approx(0.95, abs=1e-3)
    for t, dof in [(-2.5, 3.3), (0.7, 12.0), (4.0, 60.0)]:
        assert t_cdf(t, dof) == pytest.approx(stats.t.cdf(t, dof), rel=1e-10)


def test_welch_same_sample():
    a = [1.0, 2.0, 4.0, 7.0]
    t, p, _ = welch_ttest(a, a)
    assert t == 0.0 and p == 1.0


def test_welch_separated_groups():
    t, p, dof = welch_ttest([0.0, 1.0], [10.0, 11.0])
    # direct formula: variances 0.5 each, so t = -10 / sqrt(0.5), dof = 2
    assert t == pytest.approx(-10.0 / math.sqrt(0.5))
    assert dof == pytest.approx(2.0)
    assert p == pytest.approx(2 * stats.t.cdf(t, dof), rel=1e-10)
    assert p < 0.05


def test_welch_matches_scipy_and_is_symmetric():
    rng = np.random.default_rng(4)
    a = rng.normal(0, 1, size=17)
    b = rng.normal(0.8, 2.5, size=23)
    t, p, _ = welch_ttest(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(ref.statistic, rel=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)
    t2, p2, _ = welch_ttest(b, a)
    assert t2 == pytest.approx(-t) and p2 == pytest.approx(p)


def test_welch_invalid():
    with pytest.raises(InvalidSample):
        welch_ttest([1.0, 1.0, 1.0], [1.0, 2.0])
    with pytest.raises(InvalidSample):
        welch_ttest([1.0], [1.0, 2.0])
