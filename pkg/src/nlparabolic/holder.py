"""Discrete parabolic Hölder norms, the interpolation inequality, and parallel transport."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .jet_core import TorusGrid, multi_indices, spectral_derivatives

PAIR_BUDGET = 32768
DEFAULT_SEED = 20240917


@dataclass
class SpaceTimeSection:
    """Gridded section on ``T^n x [t_0, t_M]``; ``values`` has shape ``(M+1, l, *grid.shape)``."""

    grid: TorusGrid
    times: np.ndarray
    values: np.ndarray
    info: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 + self.grid.n or self.values.shape[0] != len(self.times):
            raise ValueError(f"values shape {self.values.shape} inconsistent with "
                             f"{len(self.times)} time levels on {self.grid}")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("section values must be finite")

    @classmethod
    def constant_in_time(cls, grid: TorusGrid, u0, times) -> "SpaceTimeSection":
        u0 = np.asarray(u0, dtype=float)
        return cls(grid, times, np.broadcast_to(u0, (len(times),) + u0.shape).copy())

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable, times) -> "SpaceTimeSection":
        """Sample ``fn(*coords, t)``, which returns ``(l, *grid.shape)`` or ``grid.shape``."""
        vals = []
        for t in times:
            v = np.asarray(fn(*grid.coords, t), dtype=float)
            vals.append(v if v.ndim == grid.n + 1 else v[None])
        return cls(grid, times, np.stack(vals))

    @property
    def rank(self) -> int:
        return self.values.shape[1]

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def restrict(self, last: int) -> "SpaceTimeSection":
        """Section on the first ``last + 1`` time levels."""
        return SpaceTimeSection(self.grid, self.times[: last + 1], self.values[: last + 1])

    def replace(self, values) -> "SpaceTimeSection":
        return SpaceTimeSection(self.grid, self.times, values)

    def __sub__(self, other: "SpaceTimeSection") -> "SpaceTimeSection":
        return self.replace(self.values - other.values)

    def __add__(self, other: "SpaceTimeSection") -> "SpaceTimeSection":
        return self.replace(self.values + other.values)

    def scaled(self, c: float) -> "SpaceTimeSection":
        return self.replace(c * self.values)

    def time_derivative(self) -> np.ndarray:
        """Centered differences inside, one-sided second order at the ends."""
        if len(self.times) < 2:
            raise ValueError("time derivative needs at least 2 time levels")
        edge = 2 if len(self.times) >= 3 else 1
        return np.gradient(self.values, self.times, axis=0, edge_order=edge)


# ---------------------------------------------------------------------------
# pair sampling

@lru_cache(maxsize=64)
def _pair_set(spatial_shape: tuple[int, ...], levels: int, budget: int, seed: int):
    """Index pairs into the flattened ``(level, node)`` point set.

    All spatially and temporally adjacent pairs are included, plus up to
    ``budget`` seeded random pairs; when every pair fits in the budget the
    set is exhaustive.
    """
    P = int(np.prod(spatial_shape))
    total = levels * P
    if total * (total - 1) // 2 <= budget:
        a, b = np.triu_indices(total, 1)
        return a, b, True
    nodes = np.arange(P).reshape(spatial_shape)
    first, second = [], []
    for axis in range(len(spatial_shape)):
        nbr = np.roll(nodes, -1, axis=axis).reshape(-1)
        base = nodes.reshape(-1)
        off = (np.arange(levels) * P)[:, None]
        first.append((off + base).reshape(-1))
        second.append((off + nbr).reshape(-1))
    if levels > 1:
        idx = np.arange((levels - 1) * P)
        first.append(idx)
        second.append(idx + P)
    rng = np.random.default_rng(seed)
    ra = rng.integers(0, total, size=budget)
    rb = rng.integers(0, total, size=budget)
    keep = ra != rb
    first.append(ra[keep])
    second.append(rb[keep])
    a = np.concatenate(first)
    b = np.concatenate(second)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b, False


def _pair_distances(grid: TorusGrid, times: np.ndarray, a: np.ndarray, b: np.ndarray, r: int):
    P = int(np.prod(grid.shape))
    la, na = np.divmod(a, P)
    lb, nb = np.divmod(b, P)
    sq = 0.0
    ia = np.unravel_index(na, grid.shape)
    ib = np.unravel_index(nb, grid.shape)
    for axis in range(grid.n):
        d = np.abs(ia[axis] - ib[axis])
        d = np.minimum(d, grid.N - d) * grid.spacing
        sq = sq + d**2
    dist = np.sqrt(sq)
    if r is not None and len(times) > 1:
        dist = dist + np.abs(times[la] - times[lb]) ** (1.0 / r)
    return dist


def holder_seminorm(fields: np.ndarray, grid: TorusGrid, times, r: int, alpha: float,
                    pair_budget: int = PAIR_BUDGET, seed: int = DEFAULT_SEED):
    """Parabolic seminorm ``sup |w(p) - w(q)| / d(p, q)^alpha`` over sampled pairs.

    ``fields`` has shape ``(K, levels, *grid.shape)``; the maximum is taken over
    the ``K`` scalar fields as well. Returns ``(seminorm, pairs_examined)``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    fields = np.asarray(fields, dtype=float)
    K, levels = fields.shape[:2]
    a, b, _ = _pair_set(grid.shape, levels, int(pair_budget), int(seed))
    dist = _pair_distances(grid, times, a, b, r)
    weight = dist ** (-alpha)
    flat = fields.reshape(K, -1)
    best = 0.0
    for w in flat:
        q = np.abs(w[a] - w[b]) * weight
        best = max(best, float(q.max()))
    return best, len(a)


# ---------------------------------------------------------------------------
# norms

@dataclass
class HolderNormReport:
    sup_norms: list[float]          # |d_x^j u|_0 for j = 0..r
    sup_dt: float                   # |d_t u|_0
    seminorm_top: float             # [d_x^r u]_{alpha;Q}
    seminorm_dt: float              # [d_t u]_{alpha;Q}
    pair_budget: int
    pairs_examined: int
    total: float = field(init=False)

    def __post_init__(self):
        self.total = float(sum(self.sup_norms) + self.sup_dt + self.seminorm_top + self.seminorm_dt)

    def as_dict(self) -> dict:
        d = {f"sup_dx{j}": v for j, v in enumerate(self.sup_norms)}
        d.update(sup_dt=self.sup_dt, seminorm_top=self.seminorm_top, seminorm_dt=self.seminorm_dt,
                 total=self.total, pair_budget=self.pair_budget, pairs_examined=self.pairs_examined)
        return d


def _check_alpha(alpha: float):
    if not 0 < alpha < 1:
        raise ValueError(f"Hölder exponent must lie in (0, 1), got {alpha}")


def _derivative_stack(u: SpaceTimeSection, order: int) -> np.ndarray:
    """All order-``order`` spatial derivatives of all components, ``(K, levels, *shape)``."""
    idx = multi_indices(u.grid.n, order)
    ders = spectral_derivatives(u.values, u.grid, idx)
    return np.concatenate([np.moveaxis(ders[I], 1, 0) for I in idx])


def parabolic_holder_norm(u: SpaceTimeSection, r: int, alpha: float,
                          pair_budget: int = PAIR_BUDGET, seed: int = DEFAULT_SEED) -> HolderNormReport:
    """Discrete ``C^{r+alpha, 1+alpha/r}`` norm of a space-time section."""
    _check_alpha(alpha)
    if len(u.times) < 2:
        raise ValueError("parabolic norm needs at least 2 time levels")
    if r <= 0 or r % 2:
        raise ValueError("order r must be even and positive")
    sups = [float(np.abs(_derivative_stack(u, j)).max()) for j in range(r + 1)]
    ut = u.time_derivative()
    top, npairs = holder_seminorm(_derivative_stack(u, r), u.grid, u.times, r, alpha, pair_budget, seed)
    semi_t, _ = holder_seminorm(np.moveaxis(ut, 1, 0), u.grid, u.times, r, alpha, pair_budget, seed)
    return HolderNormReport(sups, float(np.abs(ut).max()), top, semi_t, pair_budget, npairs)


def parabolic_norm(u: SpaceTimeSection, r: int, alpha: float, **kw) -> float:
    return parabolic_holder_norm(u, r, alpha, **kw).total


def low_holder_norm(f: SpaceTimeSection, r: int, alpha: float,
                    pair_budget: int = PAIR_BUDGET, seed: int = DEFAULT_SEED) -> float:
    """``||f||_{C^{alpha, alpha/r}} = |f|_0 + [f]_{alpha;Q}``."""
    _check_alpha(alpha)
    semi, _ = holder_seminorm(np.moveaxis(f.values, 1, 0), f.grid, f.times, r, alpha, pair_budget, seed)
    return float(np.abs(f.values).max()) + semi


def spatial_holder_norm(u0, grid: TorusGrid, order: int, alpha: float,
                        pair_budget: int = PAIR_BUDGET, seed: int = DEFAULT_SEED) -> float:
    """``||u0||_{C^{order+alpha}}``: sup norms of derivatives up to ``order`` plus the top seminorm."""
    _check_alpha(alpha)
    sec = SpaceTimeSection(grid, [0.0], np.asarray(u0, dtype=float)[None])
    sups = sum(float(np.abs(_derivative_stack(sec, j)).max()) for j in range(order + 1))
    semi, _ = holder_seminorm(_derivative_stack(sec, order), grid, sec.times, None, alpha, pair_budget, seed)
    return sups + semi


# ---------------------------------------------------------------------------
# interpolation inequality

@dataclass
class InterpolationCheck:
    lhs: float
    rhs: float
    constant: float
    eps: float
    sup_u: float


def interpolation_terms(u: SpaceTimeSection, r: int, alpha: float,
                        pair_budget: int = PAIR_BUDGET, seed: int = DEFAULT_SEED):
    """Left side of the interpolation inequality and the two top seminorms."""
    report = parabolic_holder_norm(u, r, alpha, pair_budget, seed)
    lhs = report.sup_norms[r]
    for j in range(r):
        semi, _ = holder_seminorm(_derivative_stack(u, j), u.grid, u.times, r, alpha, pair_budget, seed)
        lhs += semi
        if j > 0:
            lhs += report.sup_norms[j]
    return lhs, report


def verify_interpolation(u: SpaceTimeSection, r: int, alpha: float, eps: float,
                         constant: float | None = None, **kw) -> InterpolationCheck:
    """Check ``lhs <= eps([d^r u]_a + [d_t u]_a) + C |u|_0``.

    Without ``constant`` the smallest admissible ``C`` for this section is
    fitted and used; with it, that value is used for ``rhs``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    lhs, report = interpolation_terms(u, r, alpha, **kw)
    top = eps * (report.seminorm_top + report.seminorm_dt)
    sup_u = report.sup_norms[0]
    if sup_u > 0:
        fitted = max(0.0, (lhs - top) / sup_u)
    else:
        fitted = 0.0 if lhs <= top else np.inf
    C = fitted if constant is None else constant
    return InterpolationCheck(lhs, top + C * sup_u, fitted, eps, sup_u)


def random_band_limited(grid: TorusGrid, times, rng: np.random.Generator, kmax: int = 5,
                        degree: int = 2, rank: int = 1) -> SpaceTimeSection:
    """Random section: Fourier modes ``|k| <= kmax`` with polynomial-in-time coefficients."""
    times = np.asarray(times, dtype=float)
    vals = np.zeros((len(times), rank) + grid.shape)
    tau = times / max(times[-1], 1e-300)
    for c in range(rank):
        for kk in np.ndindex(*(2 * kmax + 1,) * grid.n):
            k = np.array(kk) - kmax
            if np.sqrt(np.sum(k**2)) > kmax:
                continue
            phase = sum(ki * xi for ki, xi in zip(k, grid.coords))
            coef = rng.normal(size=(degree + 1, 2)) / (1.0 + np.sum(k**2))
            poly_c = sum(coef[p, 0] * tau**p for p in range(degree + 1))
            poly_s = sum(coef[p, 1] * tau**p for p in range(degree + 1))
            vals[:, c] += np.multiply.outer(poly_c, np.cos(phase)) + np.multiply.outer(poly_s, np.sin(phase))
    return SpaceTimeSection(grid, times, vals)


# ---------------------------------------------------------------------------
# parallel transport

@dataclass
class ChristoffelSpec:
    """Connection coefficients ``Gamma^a_b(x)`` along a 1-dimensional base circle."""

    rank: int
    gamma: Callable[[float], np.ndarray]

    def matrix(self, x: float) -> np.ndarray:
        G = np.asarray(self.gamma(x), dtype=float)
        if G.shape != (self.rank, self.rank):
            raise ValueError(f"Christoffel matrix must be {self.rank}x{self.rank}")
        return G

    def is_metric_compatible(self, samples=64, tol=1e-12) -> bool:
        xs = np.linspace(0, 2 * np.pi, samples, endpoint=False)
        return all(np.abs(self.matrix(x) + self.matrix(x).T).max() <= tol for x in xs)


@dataclass
class TransportResult:
    s: np.ndarray
    V: np.ndarray
    norm_drift: float


def parallel_transport(spec: ChristoffelSpec, curve: Callable[[float], float],
                       velocity: Callable[[float], float], V0, s_max: float,
                       step: float = 1e-3) -> TransportResult:
    """Solve ``dV/ds + Gamma(gamma(s)) gamma'(s) V = 0`` with classical RK4."""
    V0 = np.asarray(V0, dtype=float)
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    if not np.isfinite(step) or step <= 1e-12 * s_max:
        raise FloatingPointError(f"step size {step} underflows for s_max={s_max}")
    steps = int(np.ceil(s_max / step - 1e-9))
    h = s_max / steps

    def rhs(s, V):
        return -spec.matrix(curve(s)) @ V * velocity(s)

    s = np.linspace(0.0, s_max, steps + 1)
    V = np.empty((steps + 1, len(V0)))
    V[0] = V0
    for i in range(steps):
        si, Vi = s[i], V[i]
        k1 = rhs(si, Vi)
        k2 = rhs(si + h / 2, Vi + h / 2 * k1)
        k3 = rhs(si + h / 2, Vi + h / 2 * k2)
        k4 = rhs(si + h, Vi + h * k3)
        V[i + 1] = Vi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(V)):
        raise FloatingPointError("transport ODE diverged")
    drift = float(np.abs(np.linalg.norm(V, axis=1) - np.linalg.norm(V0)).max())
    return TransportResult(s, V, drift)
