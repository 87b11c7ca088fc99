import numpy as np
import pytest

from mmreg.errors import DisconnectedGraph, DuplicateEdge, InvalidArgument
from mmreg.graph import (SessionGraph, all_pairs, build_design_matrix, check_connectivity,
                         full_pair_count)


@pytest.mark.parametrize("n,k", [(2, 1), (3, 3), (5, 10)])
def test_full_pair_count(n, k):
    assert full_pair_count(n) == k
    assert len(all_pairs(n)) == k


def test_full_pair_count_rejects_single():
    with pytest.raises(InvalidArgument):
        full_pair_count(1)


def test_design_two_modalities():
    obs = build_design_matrix(SessionGraph(["T1w", "PET"]), [(0, 1)])
    np.testing.assert_array_equal(obs.W, [[-1, 1]])


def test_design_three_modalities():
    obs = build_design_matrix(3, [(0, 1), (0, 2), (1, 2)])
    np.testing.assert_array_equal(obs.W, [[-1, 1, 0], [-1, 0, 1], [0, -1, 1]])


def test_design_errors():
    with pytest.raises(InvalidArgument):
        build_design_matrix(3, [(1, 1)])
    with pytest.raises(DuplicateEdge):
        build_design_matrix(3, [(0, 1), (1, 0)])
    with pytest.raises(InvalidArgument):
        build_design_matrix(3, [(0, 3)])


def test_session_graph_validation():
    with pytest.raises(InvalidArgument):
        SessionGraph(["T1w"])
    with pytest.raises(InvalidArgument):
        SessionGraph(["T1w", "T1w"])
    assert SessionGraph(["T1w", "PET", "fMRI"]).index("PET") == 1


def test_connectivity():
    check_connectivity(build_design_matrix(3, all_pairs(3)))
    check_connectivity(build_design_matrix(2, [(0, 1)]))
    with pytest.raises(DisconnectedGraph) as err:
        check_connectivity(build_design_matrix(4, [(0, 1), (2, 3)]))
    assert err.value.components == [[0, 1], [2, 3]]
    assert "{0,1}" in str(err.value) and "{2,3}" in str(err.value)


def test_rows_sum_to_zero_and_rank():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        pairs = all_pairs(n)
        rng.shuffle(pairs)
        # random spanning tree plus random extra edges keeps the graph connected
        perm = rng.permutation(n)
        tree = [(int(perm[i]), int(perm[rng.integers(0, i)])) for i in range(1, n)]
        extra = [p for p in pairs if frozenset(p) not in {frozenset(t) for t in tree}]
        chosen = tree + extra[:int(rng.integers(0, len(extra) + 1))]
        obs = build_design_matrix(n, chosen)
        check_connectivity(obs)
        np.testing.assert_array_equal(obs.W.sum(axis=1), 0)
        assert np.all(np.sort(obs.W, axis=1)[:, [0, -1]] == [-1, 1])
        assert np.count_nonzero(obs.W) == 2 * len(chosen)
        assert np.linalg.matrix_rank(obs.W) == n - 1
        np.testing.assert_allclose(obs.W @ np.ones(n), 0)
