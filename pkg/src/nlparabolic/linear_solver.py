"""Linear strongly parabolic systems on the torus, plus Gårding / Gronwall / Schauder probes."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .holder import (SpaceTimeSection, low_holder_norm, parabolic_norm, spatial_holder_norm)
from .jet_core import (LinearOperatorSpec, NotEllipticError, TorusGrid, _matvec,
                       check_strong_ellipticity, sphere_samples, spectral_derivatives, symbol_field)

log = logging.getLogger(__name__)

BLOWUP = 1e8


class InstabilityError(RuntimeError):
    def __init__(self, dt):
        self.dt = dt
        super().__init__(f"instability: solution blew up even at dt={dt:.3e}")


def phi1(z):
    """``(e^z - 1)/z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    small = np.abs(z) < 1e-8
    out[~small] = np.expm1(z[~small]) / z[~small]
    out[small] = 1.0 + z[small] / 2
    return out


def _source_levels(f, grid: TorusGrid, times, rank: int):
    """Source values at every time level, shape ``(levels, l, *shape)``, or None."""
    if f is None:
        return None
    if isinstance(f, SpaceTimeSection):
        if len(f.times) != len(times) or not np.allclose(f.times, times):
            return np.stack([_interp_levels(f, t) for t in times])
        return f.values
    if callable(f):
        vals = [np.asarray(f(*grid.coords, t), dtype=float) for t in times]
        return np.stack([v if v.ndim == grid.n + 1 else v[None] for v in vals])
    arr = np.asarray(f, dtype=float)
    if arr.ndim == grid.n + 1:
        return np.broadcast_to(arr, (len(times),) + arr.shape)
    return arr


def _interp_levels(f: SpaceTimeSection, t: float) -> np.ndarray:
    i = int(np.clip(np.searchsorted(f.times, t) - 1, 0, len(f.times) - 2))
    w = (t - f.times[i]) / (f.times[i + 1] - f.times[i])
    return (1 - w) * f.values[i] + w * f.values[i + 1]


def _as_components(u0, grid: TorusGrid) -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    return u0 if u0.ndim == grid.n + 1 else u0[None]


def solve_principal(r: int, f, u0, horizon: float, steps: int, grid: TorusGrid) -> SpaceTimeSection:
    """Exact exponential integrator for ``u_t = (-1)^(r/2-1) Laplacian^(r/2) u + f``.

    The source is frozen on each step at its left-endpoint value.
    """
    if r <= 0 or r % 2:
        raise ValueError("order must be even and positive")
    u0 = _as_components(u0, grid)
    times = np.linspace(0.0, horizon, steps + 1)
    dt = horizon / steps
    src = _source_levels(f, grid, times, u0.shape[0])
    axes = tuple(range(1, grid.n + 1))
    z = -(grid.k_abs**r) * dt
    decay = np.exp(z)
    forcing = phi1(z) * dt
    uhat = np.fft.fftn(u0, axes=axes)
    out = np.empty((steps + 1,) + u0.shape)
    out[0] = u0
    for m in range(steps):
        uhat = decay * uhat
        if src is not None:
            uhat = uhat + forcing * np.fft.fftn(src[m], axes=axes)
        out[m + 1] = np.fft.ifftn(uhat, axes=axes).real
    return SpaceTimeSection(grid, times, out)


@dataclass
class LinearProblem:
    """``u_t = L_t u + f``, ``u(0) = u0`` on ``[0, horizon]`` with ``steps`` time steps."""

    linop: LinearOperatorSpec
    u0: np.ndarray
    horizon: float
    steps: int
    f: object = None   # SpaceTimeSection | callable(*coords, t) | array | None

    def __post_init__(self):
        self.u0 = _as_components(self.u0, self.linop.grid)
        if self.horizon <= 0 or self.steps < 1:
            raise ValueError("horizon and step count must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass
class StepperConfig:
    """First-order stabilized splitting; ``shift=None`` measures the top-coefficient size."""

    shift: float | None = None
    dt: float | None = None
    max_halvings: int = 10
    diagnostics: bool = True


def measured_shift(linop: LinearOperatorSpec, t: float = 0.0, n_xi: int = 16) -> float:
    """Sup over nodes and unit covectors of the spectral norm of the principal symbol."""
    best = 0.0
    for xi in sphere_samples(linop.grid.n, n_xi):
        sym = symbol_field(linop, xi, t)
        best = max(best, float(np.linalg.norm(sym, ord=2, axis=(-2, -1)).max()))
    return best


class _Stepper:
    def __init__(self, linop: LinearOperatorSpec, shift: float, dt: float):
        grid = linop.grid
        self.linop = linop
        self.grid = grid
        self.dt = dt
        self.shift = shift
        self.axes = tuple(range(1, grid.n + 1))
        self.model = -(grid.k_abs**linop.order)  # multiplier of (-1)^(r/2-1) Laplacian^(r/2)
        self.implicit = 1.0 / (1.0 - dt * shift * self.model)
        self._coeffs = None if linop.time_dependent else linop.coefficients()
        self._mults = None

    def _terms(self, t):
        coeffs = self._coeffs if self._coeffs is not None else self.linop.coefficients(t)
        if self._mults is None or self._coeffs is None:
            self._mults = {I: self.grid.multiplier(I) for I in coeffs}
        return coeffs

    def step(self, u, t, f):
        coeffs = self._terms(t)
        uhat = np.fft.fftn(u, axes=self.axes)
        Lu = np.zeros_like(u)
        for I, A in coeffs.items():
            d = u if not I else np.fft.ifftn(uhat * self._mults[I], axes=self.axes).real
            Lu += _matvec(A, d, self.grid.n)
        rhs = Lu if f is None else Lu + f
        rhs_hat = uhat + self.dt * (np.fft.fftn(rhs, axes=self.axes) - self.shift * self.model * uhat)
        return np.fft.ifftn(rhs_hat * self.implicit, axes=self.axes).real


def linear_residual(linop: LinearOperatorSpec, u: SpaceTimeSection, f=None) -> float:
    """``sup |d_t u - L_t u - f|`` with centered time differences at interior nodes."""
    if u.steps < 2:
        return 0.0
    vals = u.values
    dudt = (vals[2:] - vals[:-2]) / (u.times[2:] - u.times[:-2]).reshape((-1,) + (1,) * (vals.ndim - 1))
    src = _source_levels(f, u.grid, u.times, u.rank)
    res = 0.0
    for m in range(1, u.steps):
        r_m = dudt[m - 1] - linop.apply(vals[m], u.times[m])
        if src is not None:
            r_m = r_m - src[m]
        res = max(res, float(np.abs(r_m).max()))
    return res


def solve_linear(problem: LinearProblem, config: StepperConfig | None = None) -> SpaceTimeSection:
    """Stabilized implicit-explicit stepping for ``u_t = L_t u + f``.

    ``c (-1)^(r/2-1) Laplacian^(r/2)`` is treated implicitly (diagonal in
    Fourier space) and ``L_t u - c(...)u + f`` explicitly. On blow-up the
    internal step is halved; the trajectory is always returned on the
    problem's own time nodes.
    """
    config = config or StepperConfig()
    linop = problem.linop
    report = check_strong_ellipticity(linop, 0.0)
    if not report.elliptic:
        raise NotEllipticError(f"linear operator is not strongly elliptic (lambda={report.lam:.4g})")
    shift = config.shift if config.shift is not None else measured_shift(linop)
    if shift <= 0:
        raise ValueError("implicit shift must be positive")
    times = problem.times
    base_dt = problem.horizon / problem.steps
    if config.dt is not None and config.dt < base_dt:
        sub = int(np.ceil(base_dt / config.dt - 1e-9))
    else:
        sub = 1
    src_coarse = _source_levels(problem.f, linop.grid, times, linop.rank)
    for halving in range(config.max_halvings + 1):
        dt = base_dt / sub
        stepper = _Stepper(linop, shift, dt)
        out = np.empty((problem.steps + 1,) + problem.u0.shape)
        out[0] = problem.u0
        u = problem.u0.copy()
        ok = True
        for m in range(problem.steps):
            for s in range(sub):
                t = times[m] + s * dt
                if src_coarse is None:
                    f = None
                elif sub == 1:
                    f = src_coarse[m]
                else:
                    w = s / sub
                    f = (1 - w) * src_coarse[m] + w * src_coarse[m + 1]
                u = stepper.step(u, t, f)
            if not np.all(np.isfinite(u)) or np.abs(u).max() > BLOWUP:
                ok = False
                break
            out[m + 1] = u
        if ok:
            break
        log.warning("blow-up at dt=%.3e, halving", dt)
        sub *= 2
    else:
        raise InstabilityError(dt)
    sol = SpaceTimeSection(linop.grid, times, out)
    sol.info.update(dt=dt, shift=shift, halvings=halving)
    if config.diagnostics:
        sol.info["residual"] = linear_residual(linop, sol, problem.f)
    return sol


def export_trajectory(section: SpaceTimeSection, path) -> None:
    """CSV with header ``t, x[, y], u_1..u_l``, one row per (time, node)."""
    grid = section.grid
    coords = [c.reshape(-1) for c in grid.coords]
    header = ["t"] + ["x", "y"][: grid.n] + [f"u_{a + 1}" for a in range(section.rank)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for m, t in enumerate(section.times):
            vals = section.values[m].reshape(section.rank, -1)
            for p in range(vals.shape[1]):
                w.writerow([repr(float(t))] + [repr(float(c[p])) for c in coords]
                           + [repr(float(v)) for v in vals[:, p]])


# ---------------------------------------------------------------------------
# certificates

def check_garding(r: int, psi, grid: TorusGrid) -> tuple[float, float, float]:
    """Spectral ``(sum |k|^r |psi_k|^2, sum (1+|k|^2)^(r/2) |psi_k|^2, sum |psi_k|^2)``.

    Coefficients are normalized so that the sums are the corresponding
    integrals over the torus.
    """
    psi = _as_components(psi, grid)
    axes = tuple(range(1, grid.n + 1))
    coef = np.fft.fftn(psi, axes=axes) / grid.N**grid.n
    power = np.sum(np.abs(coef) ** 2, axis=0) * grid.volume
    k = grid.k_abs
    return (float(np.sum(k**r * power)), float(np.sum((1 + k**2) ** (r / 2) * power)),
            float(np.sum(power)))


def garding_constant(r: int, kmax: int) -> float:
    """Smallest ``C`` with ``k^r >= (1+k^2)^(r/2)/2 - C`` for all integers ``|k| <= kmax``."""
    k = np.arange(0, kmax + 1, dtype=float)
    return float(np.max(0.5 * (1 + k**2) ** (r / 2) - k**r))


@dataclass
class GronwallReport:
    s: np.ndarray
    v: np.ndarray
    direct_bound_holds: bool
    constant: float

    @property
    def max_v(self) -> float:
        return float(self.v.max())


def gronwall_check(u: SpaceTimeSection, f: SpaceTimeSection, r: int, alpha: float,
                   checkpoint_every: int = 10, **norm_kw) -> GronwallReport:
    """Energy ``v(s) = int |u(s)|^2``, its direct bound, and the fitted constant in ``v <= C||f||^2``."""
    if np.abs(u.values[0]).max() > 1e-10:
        raise ValueError("Gronwall check expects zero initial data")
    vol = u.grid.volume
    v = vol * np.sum(u.values**2, axis=1).reshape(len(u.times), -1).mean(axis=1)
    ut = np.abs(u.time_derivative()).reshape(len(u.times), -1).max(axis=1)
    sup_ut = np.maximum.accumulate(ut)
    direct = bool(np.all(v <= u.times**2 * vol * sup_ut**2 * (1 + 1e-9) + 1e-300))
    C = 0.0
    checks = list(range(checkpoint_every, len(u.times), checkpoint_every))
    for m in checks:
        fn = low_holder_norm(f.restrict(m), r, alpha, **norm_kw)
        if fn == 0.0:
            if v[m] > 0:
                C = np.inf
            continue
        C = max(C, float(v[m] / fn**2))
    return GronwallReport(u.times, v, direct, C)


def schauder_ratio(problem: LinearProblem, solution: SpaceTimeSection, r: int, alpha: float,
                   residual_tol: float = 1e-3, **norm_kw) -> float:
    """``||u||_{r+a,1+a/r} / (||f||_{a,a/r} + ||u0||_{r+a})`` for an actual solution."""
    res = solution.info.get("residual")
    if res is None:
        res = linear_residual(problem.linop, solution, problem.f)
    if res > residual_tol:
        raise ValueError(f"residual {res:.3e} exceeds {residual_tol:.1e}; not a solution")
    src = _source_levels(problem.f, solution.grid, solution.times, solution.rank)
    f_norm = 0.0
    if src is not None:
        f_norm = low_holder_norm(SpaceTimeSection(solution.grid, solution.times, src), r, alpha, **norm_kw)
    u0_norm = spatial_holder_norm(problem.u0, solution.grid, r, alpha, **norm_kw)
    denom = f_norm + u0_norm
    if denom < 1e-14:
        return 0.0
    return parabolic_norm(solution, r, alpha, **norm_kw) / denom


def random_linear_problem(grid: TorusGrid, rng: np.random.Generator, horizon: float = 0.1,
                          steps: int = 1000, amplitude: float = 0.3, kmax: int = 3) -> LinearProblem:
    """Scalar second-order problem with ``a(x) u_xx + b(x) u_x`` and ``a`` in ``[1-amp, 1+amp]``."""
    x = grid.coords

    def smooth(scale):
        out = np.zeros(grid.shape)
        for k in range(1, kmax + 1):
            c, s = rng.normal(size=2) / k
            out += c * np.cos(k * x[0]) + s * np.sin(k * x[0])
        return scale * out / max(np.abs(out).max(), 1e-12)

    a = 1.0 + smooth(amplitude)
    coeffs = {"xx": a[None, None], "x": smooth(amplitude)[None, None]}
    linop = LinearOperatorSpec(2, 1, grid, coeffs)
    u0 = smooth(1.0)[None]
    fx = smooth(1.0)
    omega = rng.uniform(0.5, 2.0)
    f = SpaceTimeSection(grid, np.linspace(0, horizon, steps + 1),
                         np.stack([np.cos(omega * t) * fx[None] for t in np.linspace(0, horizon, steps + 1)]))
    return LinearProblem(linop, u0, horizon, steps, f)
