import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridlearn.errors import DimensionError
from gridlearn.meshes import gen_mesh
from gridlearn.metrics import compute_metrics, mean_relative_error, sample_pairs

from oracles import random_connected


def test_identity_has_zero_error():
    g = gen_mesh("grid2d", (12, 12))
    rep = compute_metrics(g, g)
    assert rep.err_lambda == 0.0 and rep.err_resistance == 0.0
    assert rep.eig_count == 50 and rep.pair_count == 100
    assert rep.density_learned == rep.density_original == pytest.approx(264 / 144)


def test_doubled_weights():
    g = gen_mesh("grid2d", (10, 10))
    rep = compute_metrics(g, g.scaled(2.0))
    assert rep.err_lambda == pytest.approx(1.0, rel=1e-9)
    assert rep.err_resistance == pytest.approx(0.5, rel=1e-9)


def test_size_mismatch_names_both():
    with pytest.raises(DimensionError, match=r"36.*49"):
        compute_metrics(gen_mesh("grid2d", (6, 6)), gen_mesh("grid2d", (7, 7)))


def test_eig_count_clipped_and_objective(rng):
    g = random_connected(rng, 12)
    X = rng.standard_normal((12, 3))
    rep = compute_metrics(g, g, X=X)
    assert rep.eig_count == 11
    assert rep.objective_learned == rep.objective_original is not None
    assert set(rep.to_dict()) >= {"err_lambda", "err_resistance", "density_learned"}


@given(st.integers(2, 500), st.integers(1, 300), st.integers(0, 1000))
def test_pairs_have_distinct_endpoints(n, count, seed):
    p = sample_pairs(n, count, seed)
    assert p.shape == (count, 2)
    assert np.all(p[:, 0] != p[:, 1])
    assert np.all((p >= 0) & (p < n))
    np.testing.assert_array_equal(p, sample_pairs(n, count, seed))


def test_mean_relative_error():
    assert mean_relative_error([1.0, 3.0], [2.0, 2.0]) == 0.5
