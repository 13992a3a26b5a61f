import numpy as np
import pytest

from nlparabolic.holder import SpaceTimeSection
from nlparabolic.jet_core import LinearOperatorSpec, NotEllipticError, TorusGrid
from nlparabolic.linear_solver import (LinearProblem, StepperConfig, check_garding, export_trajectory,
                                       garding_constant, gronwall_check, phi1, schauder_ratio, solve_linear,
                                       solve_principal)

G64 = TorusGrid(1, 64)
X = G64.coords[0]


def test_phi1_small_argument():
    assert phi1(np.array([0.0]))[0] == 1.0
    assert phi1(np.array([-1.0]))[0] == pytest.approx(1 - np.exp(-1))


def test_principal_heat_decay():
    sol = solve_principal(2, None, np.sin(3 * X), 0.1, 1000, G64)
    assert np.abs(sol.values[-1, 0] - np.exp(-0.9) * np.sin(3 * X)).max() <= 1e-10


def test_principal_biharmonic_decay():
    sol = solve_principal(4, None, np.sin(2 * X), 0.05, 500, G64)
    assert np.abs(sol.values[-1, 0] - np.exp(-0.8) * np.sin(2 * X)).max() <= 1e-10


def test_principal_constant_source():
    sol = solve_principal(2, lambda x, t: np.ones_like(x), np.zeros(64), 0.1, 10, G64)
    assert np.abs(sol.values[:, 0] - sol.times[:, None]).max() <= 1e-12


@pytest.mark.parametrize("k, r", [(1, 2), (5, 2), (2, 4), (7, 4)])
def test_principal_single_mode_with_source(k, r):
    # u_t = -k^r u + cos(kx): u = (1 - e^{-k^r t}) cos(kx) / k^r
    sol = solve_principal(r, lambda x, t: np.cos(k * x), np.zeros(64), 0.05, 37, G64)
    exact = np.multiply.outer((1 - np.exp(-(k**r) * sol.times)) / k**r, np.cos(k * X))
    assert np.abs(sol.values[:, 0] - exact).max() <= 1e-10


def test_principal_rejects_odd_order():
    with pytest.raises(ValueError):
        solve_principal(3, None, np.zeros(64), 0.1, 10, G64)


def heat_problem(steps=1000, horizon=0.1):
    return LinearProblem(LinearOperatorSpec(2, 1, G64, {"xx": 1.0}), np.sin(3 * X), horizon, steps)


def test_linear_matches_principal():
    sol = solve_linear(heat_problem())
    ref = solve_principal(2, None, np.sin(3 * X), 0.1, 1000, G64)
    assert np.abs(sol.values - ref.values).max() <= 1e-3


def variable_problem(steps, horizon=0.1):
    a = 2 + np.sin(X)
    linop = LinearOperatorSpec(2, 1, G64, {"xx": a})
    g = lambda x, t: np.exp(-t) * np.cos(x) * (1 + np.sin(x))  # noqa: E731
    return LinearProblem(linop, np.cos(X), horizon, steps, g)


def variable_error(steps, horizon=0.1):
    sol = solve_linear(variable_problem(steps, horizon))
    exact = np.multiply.outer(np.exp(-sol.times), np.cos(X))
    return float(np.abs(sol.values[:, 0] - exact).max())


def test_manufactured_variable_coefficient():
    assert variable_error(1000) <= 1e-3


def test_first_order_convergence():
    errs = [variable_error(s) for s in (250, 500, 1000, 2000)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    for q in ratios:
        assert 1.6 <= q <= 2.4, ratios


def test_l2_norm_nonincreasing():
    linop = LinearOperatorSpec(2, 1, G64, {"xx": 1.3, "x": 0.4})
    u0 = np.cos(X) + 0.5 * np.sin(4 * X) + 0.2
    sol = solve_linear(LinearProblem(linop, u0, 0.2, 400))
    l2 = np.sqrt((sol.values**2).sum(axis=(1, 2)))
    assert np.all(np.diff(l2) <= 1e-12)


def test_zero_data_gives_zero():
    sol = solve_linear(LinearProblem(LinearOperatorSpec(2, 1, G64, {"xx": 1.0}), np.zeros(64), 0.1, 50))
    assert np.all(sol.values == 0.0)


def test_rejects_non_elliptic():
    with pytest.raises(NotEllipticError):
        solve_linear(LinearProblem(LinearOperatorSpec(2, 1, G64, {"xx": -1.0}), np.sin(X), 0.1, 10))


def test_auto_halving_recovers_from_weak_shift():
    # with a shift far below the top coefficient the explicit remainder amplifies mode 30 at this dt
    linop = LinearOperatorSpec(2, 1, G64, {"xx": 1.0})
    u0 = np.sin(3 * X) + 1e-3 * np.sin(30 * X)
    sol = solve_linear(LinearProblem(linop, u0, 1.6, 100), StepperConfig(shift=0.3))
    assert sol.info["halvings"] == 2
    assert np.abs(sol.values[-1, 0] - np.exp(-14.4) * np.sin(3 * X)).max() < 1e-3


def test_residual_attached():
    sol = solve_linear(variable_problem(1000))
    assert 0 <= sol.info["residual"] <= 1e-3


def test_export_trajectory_header(tmp_path):
    sol = solve_linear(heat_problem(steps=4, horizon=0.01))
    path = tmp_path / "traj.csv"
    export_trajectory(sol, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,u_1"
    assert len(lines) == 1 + 5 * 64


def test_garding_constant_function():
    g = TorusGrid(1, 32)
    lhs, sob, l2 = check_garding(2, np.ones(32), g)
    assert lhs == 0.0
    assert sob == pytest.approx(l2)
    # lhs >= sob/2 - C l2 forces C >= 1/2
    assert garding_constant(2, 16) == 0.5


def test_garding_per_mode():
    for r in (2, 4):
        C = garding_constant(r, 128)
        k = np.arange(129.0)
        assert np.all(k**r >= 0.5 * (1 + k**2) ** (r / 2) - C)


def test_gronwall_zero():
    g = TorusGrid(1, 16)
    times = np.linspace(0, 0.1, 21)
    z = SpaceTimeSection.constant_in_time(g, np.zeros((1, 16)), times)
    rep = gronwall_check(z, z, 2, 0.5)
    assert rep.max_v == 0 and rep.constant == 0 and rep.direct_bound_holds


def test_gronwall_unit_source():
    g = TorusGrid(1, 32)
    T = 0.1
    u = solve_principal(2, lambda x, t: np.ones_like(x), np.zeros(32), T, 100, g)
    f = SpaceTimeSection.constant_in_time(g, np.ones((1, 32)), u.times)
    rep = gronwall_check(u, f, 2, 0.5)
    assert rep.v == pytest.approx(g.volume * u.times**2, rel=1e-10, abs=1e-15)
    assert rep.constant == pytest.approx(g.volume * T**2, rel=1e-10)
    assert rep.direct_bound_holds


def test_gronwall_rejects_nonzero_start():
    g = TorusGrid(1, 16)
    u = SpaceTimeSection.constant_in_time(g, np.ones((1, 16)), [0, 0.1, 0.2])
    with pytest.raises(ValueError):
        gronwall_check(u, u, 2, 0.5)


def test_schauder_zero_problem():
    linop = LinearOperatorSpec(2, 1, G64, {"xx": 1.0})
    prob = LinearProblem(linop, np.zeros(64), 0.01, 10)
    assert schauder_ratio(prob, solve_linear(prob), 2, 0.5) == 0.0


def test_schauder_rejects_non_solution():
    prob = heat_problem(steps=100, horizon=0.01)
    fake = solve_linear(prob)
    fake = fake.replace(fake.values + np.linspace(0, 1, 101)[:, None, None] ** 2)
    with pytest.raises(ValueError, match="residual"):
        schauder_ratio(prob, fake, 2, 0.5)
