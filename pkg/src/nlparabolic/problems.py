"""Catalog of test problems: operators, initial data and exact or manufactured solutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .jet_core import (NonlinearOperatorSpec, TorusGrid, canonical, check_strong_ellipticity,
                       evaluate_operator, jet_layout, linearize)


class AliasingError(ValueError):
    pass


@dataclass
class ExactSolution:
    """Closed form ``u*(x..., t)`` with its time derivative; both return ``(l, *grid.shape)``."""

    u: Callable
    u_t: Callable

    def sample(self, grid: TorusGrid, t: float) -> np.ndarray:
        return _components(self.u(*grid.coords, t), grid)

    def sample_t(self, grid: TorusGrid, t: float) -> np.ndarray:
        return _components(self.u_t(*grid.coords, t), grid)


def _components(v, grid):
    v = np.asarray(v, dtype=float)
    if v.ndim == grid.n:
        v = v[None]
    return np.broadcast_to(v, (v.shape[0],) + grid.shape).copy()


@dataclass
class ProblemCard:
    name: str
    spec: NonlinearOperatorSpec
    initial: Callable                      # (*coords) -> (l, *shape)
    exact: ExactSolution | None = None
    forcing: Callable | None = None        # g(*coords, t), already included in spec.F
    lam: float | None = None               # analytic ellipticity constant at u0, when known
    notes: str = ""
    defaults: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def order(self) -> int:
        return self.spec.order

    def grid(self, N: int | None = None) -> TorusGrid:
        return TorusGrid(self.n, N or self.defaults.get("N", 64))

    def u0(self, grid: TorusGrid) -> np.ndarray:
        return _components(self.initial(*grid.coords), grid)

    def registration_defect(self, grid: TorusGrid, times=(0.0, 0.03, 0.1)) -> float:
        """``max |d_t u* - F(jets of u*)|`` over a few time levels."""
        if self.exact is None:
            return 0.0
        worst = 0.0
        for t in times:
            lhs = self.exact.sample_t(grid, t)
            rhs = evaluate_operator(self.spec, self.exact.sample(grid, t), grid, t)
            worst = max(worst, float(np.abs(lhs - rhs).max()))
        return worst


def manufacture(spec: NonlinearOperatorSpec, exact: ExactSolution, grid: TorusGrid, times) -> np.ndarray:
    """Forcing ``g = d_t u* - F(jets of u*)`` on the grid at each time, shape ``(levels, l, *shape)``."""
    out = []
    axes = tuple(range(1, grid.n + 1))
    top = np.abs(np.fft.fftfreq(grid.N, 1.0 / grid.N)) >= grid.N // 2 - 1
    for t in np.atleast_1d(times):
        u = exact.sample(grid, t)
        uhat = np.fft.fftn(u, axes=axes) / grid.N**grid.n
        mask = np.zeros(grid.shape, dtype=bool)
        for ax in range(grid.n):
            sl = [np.newaxis] * grid.n
            sl[ax] = slice(None)
            mask = mask | top[tuple(sl)]
        energy = float(np.sum(np.abs(uhat[:, mask]) ** 2))
        if energy > 1e-10:
            raise AliasingError(f"u* not resolved on N={grid.N}: top-mode energy {energy:.2e}")
        out.append(exact.sample_t(grid, t) - evaluate_operator(spec, u, grid, t))
    return np.stack(out)


def with_forcing(spec: NonlinearOperatorSpec, g: Callable, name: str = "") -> NonlinearOperatorSpec:
    """``F + g(x, t)``; the jet gradient is unchanged by the forcing."""
    base_F = spec.F

    def F(jet):
        return base_F(jet) + _forcing_values(g, jet)

    return NonlinearOperatorSpec(spec.order, spec.rank, spec.n, F, spec.dF, spec.tube_radius,
                                 spec.K1, spec.K2, name or spec.name)


def _forcing_values(g, jet):
    return np.asarray(g(*jet.x, jet.t), dtype=float)


# ---------------------------------------------------------------------------
# operators

def linear_operator_spec(order: int, n: int, coeffs: dict, name: str = "",
                         tube_radius: float = 50.0) -> NonlinearOperatorSpec:
    """Scalar constant-coefficient ``F = sum_I c_I d_I u`` with its exact jet gradient."""
    coeffs = {canonical(k, n): float(v) for k, v in coeffs.items()}
    layout = jet_layout(n, order, 1)

    def F(j):
        return sum(c * j[I] for I, c in coeffs.items())

    def dF(j):
        return np.stack([np.full_like(j.u, coeffs.get(I, 0.0)) for _, I in layout], axis=1)

    return NonlinearOperatorSpec(order, 1, n, F, dF, tube_radius=tube_radius, name=name)


def _arctan_base():
    def F(j):
        return np.arctan(j["xx"])

    def dF(j):
        q = j["xx"]
        zero = np.zeros_like(q)
        return np.stack([zero, zero, 1.0 / (1.0 + q**2)], axis=1)

    return NonlinearOperatorSpec(2, 1, 1, F, dF, tube_radius=10.0, name="arctan")


def _arctan_forcing(x, t):
    # g = d_t u* - arctan(d_xx u*) for u* = e^{-t} cos x
    w = np.exp(-t) * np.cos(x)
    return -w + np.arctan(w)


def build_catalog() -> dict[str, ProblemCard]:
    cards = {}

    def add(card):
        cards[card.name] = card

    add(ProblemCard(
        "heat", linear_operator_spec(2, 1, {"xx": 1}, "heat"),
        initial=lambda x: np.sin(3 * x),
        exact=ExactSolution(lambda x, t: np.exp(-9 * t) * np.sin(3 * x),
                            lambda x, t: -9 * np.exp(-9 * t) * np.sin(3 * x)),
        lam=1.0, notes="u_t = u_xx", defaults={"delta": 0.1, "dt": 2e-5}))

    add(ProblemCard(
        "heat2d",
        linear_operator_spec(2, 2, {"xx": 1, "yy": 1}, "heat2d"),
        initial=lambda x, y: np.sin(x) * np.cos(2 * y),
        exact=ExactSolution(lambda x, y, t: np.exp(-5 * t) * np.sin(x) * np.cos(2 * y),
                            lambda x, y, t: -5 * np.exp(-5 * t) * np.sin(x) * np.cos(2 * y)),
        lam=1.0, notes="u_t = u_xx + u_yy", defaults={"N": 32, "delta": 0.05, "dt": 5e-5}))

    add(ProblemCard(
        "biharmonic",
        linear_operator_spec(4, 1, {"xxxx": -1}, "biharmonic", tube_radius=200.0),
        initial=lambda x: np.sin(2 * x),
        exact=ExactSolution(lambda x, t: np.exp(-16 * t) * np.sin(2 * x),
                            lambda x, t: -16 * np.exp(-16 * t) * np.sin(2 * x)),
        lam=1.0, notes="u_t = -u_xxxx", defaults={"delta": 0.05, "dt": 5e-6}))

    add(ProblemCard(
        "semilinear",
        NonlinearOperatorSpec(2, 1, 1, lambda j: j["xx"] + j.u**2, tube_radius=10.0, name="semilinear"),
        initial=lambda x: 0.5 + 0.5 * np.sin(x),
        lam=1.0, notes="u_t = u_xx + u^2", defaults={"delta": 0.05, "dt": 1e-4}))

    add(ProblemCard(
        "semilinear2d",
        NonlinearOperatorSpec(2, 1, 2, lambda j: j["xx"] + j["yy"] + j.u**2, tube_radius=10.0,
                              name="semilinear2d"),
        initial=lambda x, y: 0.3 * np.sin(x) * np.cos(y),
        lam=1.0, notes="u_t = u_xx + u_yy + u^2", defaults={"N": 32, "delta": 0.05, "dt": 1e-4}))

    add(ProblemCard(
        "arctan",
        with_forcing(_arctan_base(), _arctan_forcing, "arctan"),
        initial=lambda x: np.cos(x),
        exact=ExactSolution(lambda x, t: np.exp(-t) * np.cos(x),
                            lambda x, t: -np.exp(-t) * np.cos(x)),
        forcing=_arctan_forcing,
        lam=0.5, notes="u_t = arctan(u_xx) + g, u* = e^{-t} cos x; lambda = min 1/(1+cos^2 x)",
        defaults={"delta": 0.05, "dt": 1e-4}))

    add(ProblemCard(
        "system",
        NonlinearOperatorSpec(2, 2, 1, lambda j: np.stack([j["xx"][0] + j.u[1] ** 2,
                                                           j["xx"][1] + j.u[0] * j.u[1]]),
                              tube_radius=10.0, name="system"),
        initial=lambda x: np.stack([0.2 * np.sin(x), 0.2 * np.cos(x)]),
        lam=1.0, notes="u_t = u_xx + v^2, v_t = v_xx + u v", defaults={"delta": 0.05, "dt": 1e-4}))

    add(ProblemCard(
        "coupled",
        NonlinearOperatorSpec(2, 2, 1, lambda j: np.stack([
            j["xx"][0] + 0.5 * j["xx"][1] + 0.1 * np.sin(j.u[1]),
            -0.5 * j["xx"][0] + j["xx"][1] + 0.1 * j.u[0] * j["x"][1]]),
            tube_radius=10.0, name="coupled"),
        initial=lambda x: np.stack([0.3 * np.cos(x), 0.3 * np.sin(2 * x)]),
        lam=1.0, notes="top-order symbol [[1, 0.5], [-0.5, 1]] xi^2 plus lower-order coupling",
        defaults={"delta": 0.05, "dt": 1e-4}))
    return cards


def build_debug_cards() -> dict[str, ProblemCard]:
    return {
        "backward_heat": ProblemCard(
            "backward_heat",
            linear_operator_spec(2, 1, {"xx": -1}, "backward_heat"),
            initial=lambda x: np.sin(x), lam=-1.0, notes="ill-posed u_t = -u_xx (debug only)"),
    }


_CATALOG = build_catalog()
_DEBUG = build_debug_cards()


def catalog() -> list[ProblemCard]:
    return list(_CATALOG.values())


def get_card(name: str) -> ProblemCard:
    try:
        return _CATALOG.get(name) or _DEBUG[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(_CATALOG) + sorted(_DEBUG)}") from None


def ellipticity_at_initial(card: ProblemCard, N: int | None = None, n_xi: int = 64):
    grid = card.grid(N)
    return check_strong_ellipticity(linearize(card.spec, card.u0(grid), grid, 0.0), 0.0, n_xi)


__all__ = ["ProblemCard", "ExactSolution", "AliasingError", "catalog", "get_card", "manufacture",
           "with_forcing", "ellipticity_at_initial", "linear_operator_spec"]
