import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from opframe.decompose import (Infeasible, SimplexWeights, decompose_feasible, entropy, max_entropy_section,
                               preimage_dimension, recompose, section_continuity_probe, support)
from opframe.errors import DimensionMismatch
from opframe.models import (chsh_schema, coin_schema, grid_schema, marginal_mismatch_state, pr_box_state,
                            product_state)
from opframe.schema import enumerate_coordinates
from opframe.statespace import deterministic_vertices


def test_coin_decomposition_is_unique():
    verts = deterministic_vertices(coin_schema())
    lam = decompose_feasible(verts, [0.8, 0.2, 0.0])
    np.testing.assert_allclose(lam.weights, [0.8, 0.2], atol=1e-12)
    assert lam.as_dict() == pytest.approx({"toss=H": 0.8, "toss=T": 0.2})
    assert preimage_dimension(verts, [0.8, 0.2, 0.0]) == 0


def test_pr_box_certificate():
    verts = deterministic_vertices(chsh_schema())
    cert = decompose_feasible(verts, pr_box_state())
    assert isinstance(cert, Infeasible) and not cert
    assert cert.value == pytest.approx(4.0, abs=1e-9)
    assert cert.bound == pytest.approx(2.0, abs=1e-9)
    hi, lo = oracles.brute_force_max(verts.coords, cert.functional)
    assert hi == pytest.approx(cert.raw_bound, abs=1e-9)
    assert lo == pytest.approx(cert.raw_low, abs=1e-9)
    assert cert.functional @ pr_box_state().values > hi + 1e-6


def test_pr_box_chsh_value():
    assert oracles.chsh_value(pr_box_state()) == pytest.approx(4.0)


def test_mismatch_state_certificate_without_spread():
    Z = marginal_mismatch_state()
    verts = deterministic_vertices(Z.coords)
    cert = decompose_feasible(verts, Z)
    assert not cert
    assert cert.value > cert.bound
    labelled = cert.to_dict(Z.coords)
    assert labelled["feasible"] is False and labelled["functional"]


def test_infeasible_propagates():
    Z = pr_box_state()
    verts = deterministic_vertices(Z.coords)
    assert isinstance(support(verts, Z), Infeasible)
    assert isinstance(preimage_dimension(verts, Z), Infeasible)
    assert isinstance(max_entropy_section(verts, Z), Infeasible)


def test_product_state_uniform_section():
    Z = product_state()
    verts = deterministic_vertices(Z.coords)
    sec = max_entropy_section(verts, Z)
    np.testing.assert_allclose(sec.lam, 0.25, atol=1e-10)
    assert sec.converged
    assert sec.feasibility_residual < 1e-10


def test_nontrivial_preimage_dimension():
    coords = enumerate_coordinates(grid_schema((3, 2), impossible=[(0, 1)]))
    verts = deterministic_vertices(coords)
    Z = recompose(verts, np.full(6, 1 / 6))
    assert preimage_dimension(verts, Z) == 2
    sec = max_entropy_section(verts, Z)
    np.testing.assert_allclose(sec.lam, 1 / 6, atol=1e-9)


def test_two_measurement_grid_preimage_is_a_point():
    coords = enumerate_coordinates(grid_schema((3, 2)))
    verts = deterministic_vertices(coords)
    lam = np.random.default_rng(0).dirichlet(np.ones(6))
    assert preimage_dimension(verts, recompose(verts, lam)) == 0


def test_support_excludes_forced_zeros():
    coords = enumerate_coordinates(grid_schema((2, 2), impossible=[(0, 1)]))
    verts = deterministic_vertices(coords)
    lam = np.array([0.5, 0.5, 0.0, 0.0])  # M1 always 0
    mask = support(verts, recompose(verts, lam))
    assert mask.tolist() == [True, True, False, False]
    sec = max_entropy_section(verts, recompose(verts, lam))
    np.testing.assert_allclose(sec.lam, lam, atol=1e-10)


def test_simplex_weights_validation():
    verts = deterministic_vertices(coin_schema())
    with pytest.raises(DimensionMismatch):
        SimplexWeights(verts, [1.0])
    with pytest.raises(ValueError):
        SimplexWeights(verts, [0.7, 0.2])


def test_entropy_values():
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy([0.5, 0.5]) == pytest.approx(np.log(2))


def test_continuity_probe_shrinks():
    coords = enumerate_coordinates(grid_schema((3, 2), impossible=[(0, 1)]))
    verts = deterministic_vertices(coords)
    Z = recompose(verts, np.full(6, 1 / 6))
    other = recompose(verts, np.random.default_rng(3).dirichlet(np.ones(6)))
    rows = section_continuity_probe(verts, Z, other.values - Z.values)
    assert [r.t for r in rows] == [0.1, 0.05, 0.025]
    assert all(r.feasible for r in rows)
    d = [r.distance for r in rows]
    assert d[0] > d[1] > d[2] > 0


def test_continuity_probe_leaves_hull():
    Z = product_state()
    verts = deterministic_vertices(Z.coords)
    rows = section_continuity_probe(verts, Z, marginal_mismatch_state().values - Z.values, steps=[2.0])
    assert rows[0].feasible is False and rows[0].distance is None


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_section_is_a_preimage_with_maximal_entropy(seed):
    rng = np.random.default_rng(seed)
    schema = oracles.random_schema(rng, max_m=3, max_M=8, impossible_prob=0.5)
    verts = deterministic_vertices(schema)
    lam0 = rng.dirichlet(np.full(len(verts), 0.5))
    Z = recompose(verts, lam0)
    sec = max_entropy_section(verts, Z)
    assert sec.feasibility_residual < 1e-8
    assert sec.kkt_residual < 1e-6
    for _ in range(5):
        other = oracles.random_preimage_point(verts.matrix, lam0, rng)
        assert oracles.entropy(other) <= sec.weights.entropy() + 1e-8
