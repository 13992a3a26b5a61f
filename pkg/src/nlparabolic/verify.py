"""Verification suites: each returns rows of (check, measured value, threshold, verdict).

The numbered criteria are the project's acceptance gate; ``run_suite("all")``
runs every suite in a fixed order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fixed_point as fp
from .holder import (ChristoffelSpec, SpaceTimeSection, interpolation_terms, parallel_transport,
                     random_band_limited)
from .jet_core import LinearOperatorSpec, TorusGrid, check_strong_ellipticity, linearize
from .linear_solver import (LinearProblem, StepperConfig, check_garding, garding_constant,
                            gronwall_check, random_linear_problem, schauder_ratio, solve_linear,
                            solve_principal)
from .problems import catalog, ellipticity_at_initial, get_card

DEFAULT_SEED = 12345


@dataclass
class Check:
    criterion: str
    name: str
    measured: float
    threshold: str
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.criterion:>4} {self.name}: measured={self.measured:.6g} ({self.threshold})"


def _le(criterion, name, value, bound) -> Check:
    return Check(criterion, name, float(value), f"<= {bound:g}", bool(value <= bound))


def _ge(criterion, name, value, bound) -> Check:
    return Check(criterion, name, float(value), f">= {bound:g}", bool(value >= bound))


def _within(criterion, name, value, lo, hi) -> Check:
    return Check(criterion, name, float(value), f"in [{lo:g}, {hi:g}]", bool(lo <= value <= hi))


def _max_error(card, sol: SpaceTimeSection) -> float:
    exact = np.stack([card.exact.sample(sol.grid, t) for t in sol.times])
    return float(np.abs(exact - sol.values).max())


# ---------------------------------------------------------------------------

def suite_heat(seed: int = DEFAULT_SEED) -> list[Check]:
    rows = []
    heat = get_card("heat")
    grid = TorusGrid(1, 64)
    sol = solve_principal(2, None, heat.u0(grid), 0.1, 1000, grid)
    rows.append(_le("1", "heat decay via exact Fourier integrator", _max_error(heat, sol), 1e-10))
    res = fp.solve_nonlinear(heat.spec, heat.u0(grid), grid, 0.1, 1e-4, tol=1e-9, seed=seed)
    rows.append(_le("1", "heat decay via fixed-point route", _max_error(heat, res.solution), 1e-3))
    rows.append(Check("1", "heat fixed-point horizon", res.trace.delta, "== 0.1", res.trace.delta == 0.1))
    return rows


def suite_biharmonic(seed: int = DEFAULT_SEED) -> list[Check]:
    bih = get_card("biharmonic")
    grid = TorusGrid(1, 64)
    sol = solve_principal(4, None, bih.u0(grid), 0.05, 500, grid)
    return [_le("2", "biharmonic decay via exact Fourier integrator", _max_error(bih, sol), 1e-10)]


def suite_arctan(seed: int = DEFAULT_SEED) -> list[Check]:
    rows = []
    arc = get_card("arctan")
    grid = TorusGrid(1, 64)
    errs = []
    for dt in (1e-4, 5e-5):
        res = fp.solve_nonlinear(arc.spec, arc.u0(grid), grid, 0.05, dt, tol=1e-9, seed=seed)
        if res.trace.delta != 0.05:
            rows.append(Check("3", f"arctan horizon at dt={dt:g}", res.trace.delta, "== 0.05", False))
        errs.append(_max_error(arc, res.solution))
    rows.append(_le("3", "arctan manufactured error (dt=1e-4)", errs[0], 1e-3))
    rows.append(_within("3", "arctan error ratio dt / (dt/2)", errs[0] / errs[1], 1.6, 2.4))
    return rows


def suite_convergence(seed: int = DEFAULT_SEED) -> list[Check]:
    return suite_heat(seed) + suite_biharmonic(seed) + suite_arctan(seed)


def suite_ellipticity(seed: int = DEFAULT_SEED) -> list[Check]:
    rows = []
    for name in ("heat", "biharmonic"):
        lam = ellipticity_at_initial(get_card(name)).lam
        rows.append(_le("6", f"|lambda({name}) - 1|", abs(lam - 1.0), 1e-12))
    rep = ellipticity_at_initial(get_card("backward_heat"))
    rows.append(Check("6", "backward heat reported non-elliptic", rep.lam, "elliptic == False",
                      not rep.elliptic))
    for card in catalog():
        rows.append(_ge("6+", f"lambda({card.name}) at u0", ellipticity_at_initial(card).lam, 0.1))
    return rows


def _semilinear_contraction(seed):
    card = get_card("semilinear")
    grid = card.grid(64)
    return fp.measure_contraction(card.spec, card.u0(grid), grid, [0.04, 0.02, 0.01, 0.005], dt=1e-4,
                                  alpha=0.5, seed=seed)


def suite_contraction(seed: int = DEFAULT_SEED) -> list[Check]:
    tab = _semilinear_contraction(seed)
    predicted = 0.5 / 2
    rows = [
        _within("4", "log-log slope of contraction factor vs delta", tab.slope,
                0.7 * predicted, 1.3 * predicted),
        _le("4", "contraction factor at delta=0.005", tab.factors[-1], 0.5),
        _ge("4+", "slope not below alpha/r (upper-envelope reading)", tab.slope, 0.7 * predicted),
        Check("4+", "factor nondecreasing in delta", float(np.min(np.diff(tab.factors[::-1]))), ">= 0",
              bool(np.all(np.diff(tab.factors[::-1]) >= 0))),
    ]
    return rows


def uniqueness_bump(ball: fp.BallSpec) -> SpaceTimeSection:
    """``u0 + 0.01 sin(x) t (delta - t)``: a second member of Y."""
    ext = ball.extension()
    t = ball.times
    bump = 0.01 * np.multiply.outer(t * (ball.delta - t), np.sin(ball.grid.coords[0])[None])
    return ext.replace(ext.values + bump)


def suite_uniqueness(seed: int = DEFAULT_SEED) -> list[Check]:
    card = get_card("arctan")
    grid = card.grid(64)
    dist = fp.verify_uniqueness(card.spec, card.u0(grid), grid, 0.05, [None, uniqueness_bump],
                                dt=1e-4, tol=1e-9, seed=seed)
    return [_le("5", "distance between fixed points from two starts", dist, 1e-8)]


def suite_garding(seed: int = DEFAULT_SEED) -> list[Check]:
    rows = []
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, 64)
    k = np.arange(0, 129, dtype=float)
    for r, expected in ((2, 0.5), (4, None)):
        C = garding_constant(r, 128)
        per_mode = k**r - (0.5 * (1 + k**2) ** (r / 2) - C)
        rows.append(_ge("7", f"per-mode Garding margin r={r}, |k|<=128", per_mode.min(), 0.0))
        if expected is not None:
            rows.append(_le("7", f"Garding constant r={r} equals {expected}", abs(C - expected), 1e-15))
        worst = np.inf
        modes = np.arange(grid.N // 2)
        x = grid.coords[0]
        for _ in range(100):
            a, b = rng.normal(size=(2, len(modes))) / (1.0 + modes)
            psi = np.cos(np.outer(x, modes)) @ a + np.sin(np.outer(x, modes)) @ b
            lhs, sob, l2 = check_garding(r, psi, grid)
            worst = min(worst, lhs - (0.5 * sob - C * l2))
        rows.append(_ge("7", f"integral Garding margin r={r}, 100 random psi", worst, -1e-9))
    return rows


def _gronwall_problem(grid: TorusGrid, horizon: float, dt: float) -> LinearProblem:
    """``(2 + sin x) u_xx`` with ``u* = e^{-t} cos x`` shifted to zero initial data."""
    a = 2 + np.sin(grid.coords[0])
    linop = LinearOperatorSpec(2, 1, grid, {"xx": a[None, None]})

    def f(x, t):
        w = (np.exp(-t) - 1) * np.cos(x)
        return -np.exp(-t) * np.cos(x) + (2 + np.sin(x)) * w

    steps = int(round(horizon / dt))
    times = np.linspace(0, horizon, steps + 1)
    src = SpaceTimeSection.from_function(grid, f, times)
    return LinearProblem(linop, np.zeros((1,) + grid.shape), horizon, steps, src)


def gronwall_constant(horizon: float, dt: float, seed: int = DEFAULT_SEED, alpha: float = 0.5):
    grid = TorusGrid(1, 64)
    prob = _gronwall_problem(grid, horizon, dt)
    u = solve_linear(prob, StepperConfig(diagnostics=False))
    return gronwall_check(u, prob.f, 2, alpha, checkpoint_every=int(round(0.005 / dt)), seed=seed)


def suite_gronwall(seed: int = DEFAULT_SEED) -> list[Check]:
    rows = []
    coarse = {T: gronwall_constant(T, 1e-4, seed) for T in (0.05, 0.1, 0.2)}
    fine = gronwall_constant(0.2, 5e-5, seed)
    C = [coarse[T].constant for T in (0.05, 0.1, 0.2)]
    rows.append(Check("8", "fitted C finite", C[-1], "finite", bool(np.isfinite(C[-1]))))
    rows.append(_le("8", "relative drift of C under dt halving", abs(fine.constant - C[-1]) / C[-1], 0.10))
    rows.append(Check("8", "C nondecreasing over T in {0.05, 0.1, 0.2}", float(np.min(np.diff(C))), ">= 0",
                      bool(np.all(np.diff(C) >= 0))))
    rows.append(Check("8", "direct bound v(s) <= s^2 vol |u_t|^2", float(coarse[0.2].max_v), "holds",
                      all(rep.direct_bound_holds for rep in coarse.values())))
    return rows


def schauder_batch(seed: int = DEFAULT_SEED, count: int = 20, alpha: float = 0.5):
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, 64)
    ratios = []
    for _ in range(count):
        prob = random_linear_problem(grid, rng, horizon=0.05, steps=2000, amplitude=0.3, kmax=2)
        sol = solve_linear(prob)
        ratios.append(schauder_ratio(prob, sol, 2, alpha, seed=seed))
    return np.array(ratios)


def heat_schauder_ratio(N: int, dt: float, seed: int = DEFAULT_SEED, alpha: float = 0.5) -> float:
    grid = TorusGrid(1, N)
    linop = LinearOperatorSpec(2, 1, grid, {"xx": 1.0})
    prob = LinearProblem(linop, np.sin(3 * grid.coords[0]), 0.1, int(round(0.1 / dt)))
    return schauder_ratio(prob, solve_linear(prob), 2, alpha, seed=seed)


def suite_schauder(seed: int = DEFAULT_SEED) -> list[Check]:
    ratios = schauder_batch(seed)
    med = float(np.median(ratios))
    coarse = heat_schauder_ratio(64, 2e-5, seed)
    fine = heat_schauder_ratio(128, 1e-5, seed)
    change = max(coarse, fine) / min(coarse, fine)
    return [
        _le("9", "max / median Schauder ratio over 20 random problems", ratios.max() / med, 10.0),
        _le("9", "heat Schauder ratio change under refinement (factor)", change, 2.0),
    ]


def interpolation_batch(N: int, levels: int, seed: int, r: int = 2, alpha: float = 0.5, count: int = 100,
                        eps_values=(0.1, 0.01)):
    """Per-section fitted constants for each eps on ``count`` random band-limited sections."""
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, N)
    times = np.linspace(0.0, 0.1, levels)
    fitted = {eps: [] for eps in eps_values}
    for _ in range(count):
        u = random_band_limited(grid, times, rng, kmax=5, degree=2)
        lhs, rep = interpolation_terms(u, r, alpha, seed=seed)
        for eps in eps_values:
            top = eps * (rep.seminorm_top + rep.seminorm_dt)
            fitted[eps].append(max(0.0, (lhs - top) / rep.sup_norms[0]))
    return {eps: np.array(v) for eps, v in fitted.items()}


def suite_interpolation(seed: int = DEFAULT_SEED) -> list[Check]:
    rows = []
    base = interpolation_batch(32, 21, seed)
    doubled = interpolation_batch(64, 41, seed)
    for eps, Cs in base.items():
        C = Cs.max()
        rows.append(Check("10", f"inequality holds on 100 sections with batch C(eps={eps:g})", C,
                          "all hold, finite", bool(np.isfinite(C) and np.all(Cs <= C))))
        change = max(C, doubled[eps].max()) / min(C, doubled[eps].max())
        rows.append(_le("10", f"batch C(eps={eps:g}) change under grid doubling (factor)", change, 2.0))
    return rows


def suite_transport(seed: int = DEFAULT_SEED) -> list[Check]:
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rot = ChristoffelSpec(2, lambda x: J)
    V0 = np.array([1.0, 0.5])
    res = parallel_transport(rot, lambda s: s, lambda s: 1.0, V0, 2 * np.pi, step=1e-3)
    c, s = np.cos(res.s), np.sin(res.s)
    exact = np.stack([c * V0[0] - s * V0[1], s * V0[0] + c * V0[1]], axis=1)
    rows = [_le("11", "rotation connection vs closed form", np.abs(res.V - exact).max(), 1e-8)]
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(3, 3))
    B = B - B.T
    var = ChristoffelSpec(3, lambda x: (1 + 0.5 * np.sin(x)) * B)
    res = parallel_transport(var, lambda s: 0.3 * s + np.sin(s), lambda s: 0.3 + np.cos(s),
                             rng.normal(size=3), 10.0, step=1e-3)
    rows.append(_le("11", "norm drift for a metric-compatible connection", res.norm_drift, 1e-8))
    return rows


def suite_bootstrap(seed: int = DEFAULT_SEED) -> list[Check]:
    rows = []
    grid = TorusGrid(1, 64)
    times = np.linspace(0, 0.05, 501)
    u = SpaceTimeSection.from_function(grid, lambda x, t: np.exp(-t) * np.sin(x), times)
    table, ref = fp.bootstrap_diagnostic(u, 2, 0.5, seed=seed)
    norms = [row.norm for row in table]
    drift = max(abs(a - b) / b for a, b in zip(norms[:-1], norms[1:]))
    rows.append(_le("12", "smooth: drift between successive h", drift, 0.05))
    rows.append(_le("12", "smooth: |norm(h=dx) - norm(d_x u)| / norm(d_x u)", abs(norms[-1] - ref[0]) / ref[0],
                    0.05))
    card = get_card("arctan")
    res = fp.solve_nonlinear(card.spec, card.u0(grid), grid, 0.05, 1e-4, tol=1e-9, seed=seed)
    table, ref = fp.bootstrap_diagnostic(res.solution, 2, 0.5, seed=seed)
    rows.append(_le("12", "arctan: max_h |u_h| / |d_x u|", max(r.norm for r in table) / ref[0], 3.0))
    return rows


SUITES: dict[str, Callable[..., list[Check]]] = {
    "convergence": suite_convergence,
    "contraction": suite_contraction,
    "uniqueness": suite_uniqueness,
    "ellipticity": suite_ellipticity,
    "garding": suite_garding,
    "gronwall": suite_gronwall,
    "schauder": suite_schauder,
    "interpolation": suite_interpolation,
    "transport": suite_transport,
    "bootstrap": suite_bootstrap,
}


# finer-grained pieces of the convergence suite, addressable but not part of "all"
PARTS = {"heat": suite_heat, "biharmonic": suite_biharmonic, "arctan": suite_arctan}


def run_suite(name: str, seed: int = DEFAULT_SEED) -> list[Check]:
    if name in PARTS:
        return PARTS[name](seed)
    if name == "all":
        return [row for suite in SUITES.values() for row in suite(seed)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[name](seed)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


__all__ = ["Check", "SUITES", "run_suite", "check_strong_ellipticity", "linearize"]
