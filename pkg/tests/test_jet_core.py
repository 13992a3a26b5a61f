import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlparabolic.jet_core import (LinearOperatorSpec, NonlinearOperatorSpec, TorusGrid, Tube, TubeViolation,
                                  canonical, check_strong_ellipticity, evaluate_operator, linearize,
                                  multi_indices_upto, principal_symbol, spectral_jet)
from nlparabolic.problems import catalog, get_card


def test_grid_rejects_odd_N():
    with pytest.raises(ValueError):
        TorusGrid(1, 31)


def test_canonical_sorts_mixed_partials():
    assert canonical("yx", 2) == (0, 1)
    assert canonical((1, 0, 1), 2) == (0, 1, 1)


def test_jet_of_sine():
    g = TorusGrid(1, 32)
    x = g.coords[0]
    j = spectral_jet(np.sin(x), g, 2)
    assert np.abs(j["x"] - np.cos(x)).max() <= 1e-10
    assert np.abs(j["xx"] + np.sin(x)).max() <= 1e-10


def test_jet_of_constant():
    g = TorusGrid(2, 16)
    j = spectral_jet(np.full(g.shape, 3.0), g, 4)
    for I in multi_indices_upto(2, 4):
        if I:
            assert np.abs(j[I]).max() < 1e-12


def test_mixed_derivative_2d():
    g = TorusGrid(2, 32)
    x, y = g.coords
    j = spectral_jet(np.sin(2 * x) * np.cos(y), g, 2)
    assert np.abs(j["xy"] + 2 * np.cos(2 * x) * np.sin(y)).max() <= 1e-10


def test_jet_rejects_nan():
    g = TorusGrid(1, 16)
    u = np.zeros(16)
    u[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        spectral_jet(u, g, 2)


@given(k=st.integers(1, 15), r=st.sampled_from([1, 2, 3, 4]))
def test_spectral_exact_below_nyquist(k, r):
    g = TorusGrid(1, 32)
    x = g.coords[0]
    d = spectral_jet(np.cos(k * x), g, r)[(0,) * r]
    exact = k**r * np.cos(k * x + r * np.pi / 2)
    assert np.abs(d - exact).max() <= 1e-10 * k**r


@pytest.mark.parametrize("F, expected", [
    (lambda j: j["xx"], lambda x: -np.sin(x)),
    (lambda j: j["xx"] + j.u**2, lambda x: -np.sin(x) + np.sin(x) ** 2),
])
def test_evaluate_on_sine(F, expected):
    g = TorusGrid(1, 32)
    x = g.coords[0]
    spec = NonlinearOperatorSpec(2, 1, 1, F)
    assert np.abs(evaluate_operator(spec, np.sin(x), g) - expected(x)).max() <= 1e-10


def test_evaluate_arctan():
    g = TorusGrid(1, 32)
    x = g.coords[0]
    spec = NonlinearOperatorSpec(2, 1, 1, lambda j: np.arctan(j["xx"]))
    assert np.abs(evaluate_operator(spec, np.cos(x), g) - np.arctan(-np.cos(x))).max() <= 1e-10


def test_tube_violation_names_node():
    g = TorusGrid(1, 32)
    x = g.coords[0]
    tube = Tube.around(np.zeros(32), g, 2, 1.0)
    spec = NonlinearOperatorSpec(2, 1, 1, lambda j: j["xx"])
    with pytest.raises(TubeViolation) as err:
        evaluate_operator(spec, 5 * np.sin(x), g, tube=tube)
    assert err.value.distance > 1.0
    assert len(err.value.worst_node) == 1


def test_linearize_heat():
    g = TorusGrid(1, 16)
    spec = NonlinearOperatorSpec(2, 1, 1, lambda j: j["xx"])
    coeffs = linearize(spec, np.sin(g.coords[0]), g).coefficients()
    assert np.allclose(coeffs[(0, 0)], 1, atol=1e-8)
    assert np.allclose(coeffs[(0,)], 0, atol=1e-8)
    assert np.allclose(coeffs[()], 0, atol=1e-8)


def test_linearize_chain_rule():
    g = TorusGrid(1, 32)
    x = g.coords[0]
    spec = NonlinearOperatorSpec(2, 1, 1, lambda j: j["x"] ** 2)
    coeffs = linearize(spec, np.sin(x), g).coefficients()
    assert np.abs(coeffs[(0,)][0, 0] - 2 * np.cos(x)).max() < 1e-7
    assert np.abs(coeffs[()]).max() < 1e-7


def _smooth_direction(grid, rng, rank):
    x = grid.coords
    v = np.zeros((rank,) + grid.shape)
    for c in range(rank):
        for k in range(1, 4):
            phase = sum(rng.uniform(0, 2 * np.pi) + k * xi for xi in x)
            v[c] += rng.normal() * np.cos(phase) / k
    return v


@pytest.mark.parametrize("card", catalog(), ids=lambda c: c.name)
def test_linearization_matches_directional_difference(card):
    grid = card.grid(16 if card.n == 2 else 32)
    u0 = card.u0(grid)
    L = linearize(card.spec, u0, grid, 0.0)
    rng = np.random.default_rng(3)
    s = 1e-6
    base = evaluate_operator(card.spec, u0, grid).reshape(u0.shape)
    for _ in range(20):
        v = _smooth_direction(grid, rng, u0.shape[0])
        fd = (evaluate_operator(card.spec, u0 + s * v, grid).reshape(u0.shape) - base) / s
        lin = L.apply(v)
        assert np.abs(fd - lin).max() <= 1e-5 * max(np.abs(lin).max(), 1.0)


def test_symbol_examples():
    g2 = TorusGrid(2, 8)
    lap = LinearOperatorSpec(2, 1, g2, {"xx": 1.0, "yy": 1.0})
    assert np.allclose(principal_symbol(lap, 0, [1.0, 0.0]), [[1.0]])
    g1 = TorusGrid(1, 8)
    bih = LinearOperatorSpec(4, 1, g1, {"xxxx": -1.0})
    assert np.allclose(principal_symbol(bih, 3, [2.0]), [[-16.0]])
    top = np.array([[1.0, 0.5], [-0.5, 1.0]])
    sysop = LinearOperatorSpec(2, 2, g1, {"xx": top})
    assert np.allclose(principal_symbol(sysop, 0, [1.0]), top)


def test_symbol_rejects_zero_covector():
    lap = LinearOperatorSpec(2, 1, TorusGrid(1, 8), {"xx": 1.0})
    with pytest.raises(ValueError):
        principal_symbol(lap, 0, [0.0])


@settings(max_examples=25)
@given(c=st.floats(0.1, 10.0), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_symbol_homogeneity(c, a, b):
    if abs(a) + abs(b) < 1e-3:
        return
    g = TorusGrid(2, 8)
    x, y = g.coords
    L = LinearOperatorSpec(2, 1, g, {"xx": 2 + np.sin(x), "xy": 0.3 * np.cos(y), "yy": 1.0})
    s1 = principal_symbol(L, 5, [c * a, c * b])
    s0 = principal_symbol(L, 5, [a, b])
    assert np.allclose(s1, c**2 * s0, rtol=1e-12, atol=1e-12)


def test_symbol_ignores_lower_order():
    g = TorusGrid(2, 8)
    L = LinearOperatorSpec(2, 1, g, {"xx": 1.0, "yy": 2.0})
    L2 = L.with_lower_order({"x": 5.0, "": -3.0, "y": np.cos(g.coords[0])})
    for node in range(0, 64, 7):
        assert np.array_equal(principal_symbol(L, node, [0.3, 0.7]), principal_symbol(L2, node, [0.3, 0.7]))


def test_ellipticity_examples():
    g = TorusGrid(1, 16)
    assert check_strong_ellipticity(LinearOperatorSpec(2, 1, g, {"xx": 1.0})).lam == 1.0
    back = check_strong_ellipticity(LinearOperatorSpec(2, 1, g, {"xx": -1.0}))
    assert back.lam == -1.0 and not back.elliptic
    bih = check_strong_ellipticity(LinearOperatorSpec(4, 1, g, {"xxxx": -1.0}))
    assert bih.lam == 1.0 and bih.elliptic


def test_laplacian_2d_lambda_is_one():
    g = TorusGrid(2, 8)
    rep = check_strong_ellipticity(LinearOperatorSpec(2, 1, g, {"xx": 1.0, "yy": 1.0}))
    assert abs(rep.lam - 1.0) <= 1e-12


def test_refinement_never_increases_lambda():
    g = TorusGrid(2, 16)
    x, y = g.coords
    L = LinearOperatorSpec(2, 1, g, {"xx": 1.5 + np.sin(x), "xy": 0.8 * np.cos(y), "yy": 1.0})
    lams = [check_strong_ellipticity(L, n_xi=n).lam for n in (4, 8, 16, 32, 64)]
    assert all(b <= a + 1e-15 for a, b in zip(lams, lams[1:]))


def test_backward_heat_card_not_elliptic():
    card = get_card("backward_heat")
    g = card.grid(16)
    assert not check_strong_ellipticity(linearize(card.spec, card.u0(g), g)).elliptic
