"""Linearize-and-contract solver for ``u_t = P_t(u)``, ``u(0) = u0``, with its diagnostics."""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .holder import (HolderNormReport, SpaceTimeSection, parabolic_holder_norm, parabolic_norm)
from .jet_core import (LinearOperatorSpec, NonlinearOperatorSpec, NotEllipticError, TorusGrid, Tube,
                       TubeViolation, check_strong_ellipticity, linearize, spectral_derivatives,
                       spectral_jet)
from .linear_solver import LinearProblem, StepperConfig, measured_shift, solve_linear

log = logging.getLogger(__name__)

MAX_HALVINGS = 12


class NoContractionHorizon(RuntimeError):
    pass


@dataclass
class BallSpec:
    """The set Y: sections with ``u(0) = u0`` within ``R`` of ``u0`` in the parabolic norm."""

    u0: np.ndarray
    grid: TorusGrid
    R: float
    delta: float
    steps: int
    R0: float
    r: int
    alpha: float = 0.5

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.delta, self.steps + 1)

    @property
    def dt(self) -> float:
        return self.delta / self.steps

    def extension(self) -> SpaceTimeSection:
        return SpaceTimeSection.constant_in_time(self.grid, self.u0, self.times)

    def distance(self, u: SpaceTimeSection, **norm_kw) -> float:
        return parabolic_norm(u - self.extension(), self.r, self.alpha, **norm_kw)

    def contains(self, u: SpaceTimeSection, **norm_kw) -> bool:
        if np.abs(u.values[0] - self.u0).max() > 1e-12:
            return False
        return self.distance(u, **norm_kw) <= self.R * (1 + 1e-12)

    def tube(self) -> Tube:
        return Tube.around(self.u0, self.grid, self.r, self.R0)


def frozen_linearization(spec: NonlinearOperatorSpec, u0, grid: TorusGrid) -> LinearOperatorSpec:
    """``P_{0*|u0}``; rejects initial data at which the operator is not strongly elliptic."""
    linop = linearize(spec, u0, grid, 0.0)
    report = check_strong_ellipticity(linop, 0.0)
    if not report.elliptic:
        raise NotEllipticError(f"P_0 is not strongly elliptic at u0 (lambda={report.lam:.4g})")
    return linop


def operator_values(spec: NonlinearOperatorSpec, u: SpaceTimeSection, tube: Tube | None = None):
    """``F(jets of u(t), t)`` at every time level, plus the tube margin (inf without a tube)."""
    vals = np.moveaxis(u.values, 0, 1)
    t = u.times.reshape((-1,) + (1,) * u.grid.n)
    jet = spectral_jet(vals, u.grid, spec.order, t)
    margin = np.inf
    if tube is not None:
        margin = tube.check(jet)
    return np.moveaxis(spec.apply_F(jet), 1, 0), margin


def nonlinear_residual(spec: NonlinearOperatorSpec, u: SpaceTimeSection, Fu=None) -> float:
    """``sup |d_t u - P_t(u)|`` with centered differences at interior time nodes."""
    if u.steps < 2:
        return 0.0
    if Fu is None:
        Fu, _ = operator_values(spec, u)
    dudt = (u.values[2:] - u.values[:-2]) / (2 * u.dt)
    return float(np.abs(dudt - Fu[1:-1]).max())


class _Map:
    """``G`` for a fixed ball: shares the frozen operator and solver settings across calls."""

    def __init__(self, spec, ball: BallSpec, linop=None, shift=None):
        self.spec = spec
        self.ball = ball
        self.linop = linop if linop is not None else frozen_linearization(spec, ball.u0, ball.grid)
        self.config = StepperConfig(shift=shift if shift is not None else measured_shift(self.linop),
                                    diagnostics=False)
        self.tube = ball.tube()
        self.last_margin = np.inf
        self.last_residual = np.nan

    def source(self, u: SpaceTimeSection) -> SpaceTimeSection:
        Fu, margin = operator_values(self.spec, u, self.tube)
        self.last_margin = margin
        self.last_residual = nonlinear_residual(self.spec, u, Fu)
        Lu = self.linop.apply(np.moveaxis(u.values, 0, 1))
        return u.replace(Fu - np.moveaxis(Lu, 0, 1))

    def __call__(self, u: SpaceTimeSection) -> SpaceTimeSection:
        problem = LinearProblem(self.linop, self.ball.u0, self.ball.delta, self.ball.steps, self.source(u))
        return solve_linear(problem, self.config)


def contraction_map(spec: NonlinearOperatorSpec, ball: BallSpec, u: SpaceTimeSection,
                    linop: LinearOperatorSpec | None = None) -> SpaceTimeSection:
    """``G(u) = w`` with ``w_t = P_{0*|u0} w + F(u) - P_{0*|u0} u``, ``w(0) = u0``."""
    return _Map(spec, ball, linop)(u)


# ---------------------------------------------------------------------------
# iteration

@dataclass
class IterationRecord:
    iter: int
    distance: float
    factor: float
    tube_margin: float
    residual: float
    cond31: bool
    cond33: bool
    cond37: bool
    delta: float
    in_ball: bool = True


@dataclass
class ContractionTrace:
    records: list[IterationRecord] = field(default_factory=list)
    delta: float = 0.0
    R: float = 0.0
    restarts: int = 0

    def distances(self) -> np.ndarray:
        return np.array([r.distance for r in self.records])

    def to_csv(self, path) -> None:
        cols = ["iter", "distance", "factor", "cond31", "cond33", "cond37", "delta"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for rec in self.records:
                row = asdict(rec)
                w.writerow([row["iter"], repr(row["distance"]), repr(row["factor"]), int(row["cond31"]),
                            int(row["cond33"]), int(row["cond37"]), repr(row["delta"])])


@dataclass
class SolveResult:
    solution: SpaceTimeSection
    trace: ContractionTrace
    residual: float
    norm: HolderNormReport
    converged: bool
    iterations: int

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "delta_final": self.trace.delta,
            "R": self.trace.R,
            "restarts": self.trace.restarts,
            "final_distance": float(self.trace.records[-1].distance) if self.trace.records else 0.0,
            "norm": self.norm.as_dict(),
        }

    def write_summary(self, path, **extra) -> None:
        with open(path, "w") as fh:
            json.dump({**self.summary(), **extra}, fh, indent=2, sort_keys=True)


class _Restart(Exception):
    def __init__(self, reason):
        self.reason = reason


def iterate(spec: NonlinearOperatorSpec, ball: BallSpec, start: SpaceTimeSection | None = None,
            tol: float = 1e-9, max_iter: int = 50, linop=None, strict: bool = False,
            q_max: float = 0.5, **norm_kw):
    """Picard iteration ``u_{k+1} = G(u_k)`` inside ``ball``.

    With ``strict`` any violated condition raises ``_Restart``; otherwise the
    flags are only recorded. Returns ``(solution, records, converged)``.
    """
    G = _Map(spec, ball, linop)
    u = ball.extension() if start is None else start
    records = []
    prev = None
    for k in range(max_iter + 1):
        try:
            w = G(u)
        except TubeViolation as exc:
            if strict:
                raise _Restart(f"cond31: {exc}") from exc
            raise
        d = parabolic_norm(w - u, ball.r, ball.alpha, **norm_kw)
        q = d / prev if prev else 0.0
        in_ball = ball.distance(w, **norm_kw) <= ball.R * (1 + 1e-12) if ball.R > 0 else d == 0
        rec = IterationRecord(k, d, q, G.last_margin, G.last_residual,
                              cond31=G.last_margin >= 0.5 * ball.R0,
                              cond33=q <= q_max,
                              cond37=ball.R / 2 >= records[0].distance if records else ball.R / 2 >= d,
                              delta=ball.delta, in_ball=bool(in_ball))
        records.append(rec)
        u = w
        if d <= tol:
            return u, records, True
        if strict:
            if not rec.in_ball:
                raise _Restart("iterate left the ball")
            if k >= 2 and q > q_max:
                raise _Restart(f"cond33: factor {q:.3g} > {q_max}")
            if k >= 3 and d >= records[0].distance:
                raise _Restart("no contraction after 3 iterations")
        prev = d
    return u, records, False


def _steps_for(delta: float, dt: float) -> int:
    return max(2, int(round(delta / dt)))


def initial_radius(spec, u0, grid, delta, dt, r, alpha, linop=None, **norm_kw) -> float:
    """``4 ||G(u0) - u0||``: enforces ``R/2 >= C'`` with a factor-2 margin."""
    ball = BallSpec(u0, grid, np.inf, delta, _steps_for(delta, dt), spec.tube_radius, r, alpha)
    G = _Map(spec, ball, linop)
    ext = ball.extension()
    return 4.0 * parabolic_norm(G(ext) - ext, r, alpha, **norm_kw)


def solve_nonlinear(spec: NonlinearOperatorSpec, u0, grid: TorusGrid, delta_init: float = 0.05,
                    dt: float = 1e-4, tol: float = 1e-9, max_iter: int = 50, alpha: float = 0.5,
                    start: Callable[[BallSpec], SpaceTimeSection] | None = None,
                    adapt: bool = True, **norm_kw) -> SolveResult:
    """Contraction-mapping solve on ``[0, delta]``, halving ``delta`` until the map contracts."""
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim == grid.n:
        u0 = u0[None]
    r = spec.order
    linop = frozen_linearization(spec, u0, grid)
    Tube.around(u0, grid, r, spec.tube_radius)  # validates u0
    delta = float(delta_init)
    restarts = 0
    for restarts in range(MAX_HALVINGS + 1):
        steps = _steps_for(delta, dt)
        try:
            R = initial_radius(spec, u0, grid, delta, dt, r, alpha, linop, **norm_kw)
            ball = BallSpec(u0, grid, R, delta, steps, spec.tube_radius, r, alpha)
            first = start(ball) if start is not None else None
            sol, records, converged = iterate(spec, ball, first, tol, max_iter, linop, strict=adapt, **norm_kw)
            if not converged and adapt:
                raise _Restart("max_iter reached")
            break
        except (_Restart, TubeViolation) as exc:
            reason = getattr(exc, "reason", str(exc))
            log.info("delta=%.4g rejected (%s); halving", delta, reason)
            delta /= 2
    else:
        raise NoContractionHorizon(f"no contraction horizon found after {MAX_HALVINGS} halvings")
    trace = ContractionTrace(records, delta, R, restarts)
    Fu, _ = operator_values(spec, sol)
    residual = nonlinear_residual(spec, sol, Fu)
    norm = parabolic_holder_norm(sol, r, alpha, **norm_kw)
    return SolveResult(sol, trace, residual, norm, converged, len(records))


# ---------------------------------------------------------------------------
# contraction scaling, uniqueness, bootstrap

@dataclass
class ContractionTable:
    deltas: np.ndarray
    factors: np.ndarray
    slope: float
    intercept: float
    pairs_used: list[int]


PairFamily = Callable[[BallSpec], Sequence[tuple[SpaceTimeSection, SpaceTimeSection]]]


def default_pairs(count: int = 4, seed: int = 7, kmax: int = 4, scale: float = 0.25) -> PairFamily:
    """Members ``u0 + R s(t) phi(x)`` of Y with seeded random band-limited ``phi``.

    The time profiles vanish at ``t = 0`` so both members of each pair start at u0.
    """
    def family(ball: BallSpec):
        rng = np.random.default_rng(seed)
        x = ball.grid.coords
        tau = ball.times / ball.delta
        ext = ball.extension()
        pairs = []
        for _ in range(count):
            members = []
            for _ in range(2):
                phi = np.zeros((ball.u0.shape[0],) + ball.grid.shape)
                for c in range(phi.shape[0]):
                    for k in range(1, kmax + 1):
                        a, b = rng.normal(size=2)
                        phi[c] += (a * np.cos(k * x[0]) + b * np.sin(k * x[0])) / k**2
                p = rng.uniform(0.5, 1.5)
                prof = ball.delta * tau**p
                pert = ext.replace(np.multiply.outer(prof, phi))
                size = parabolic_norm(pert, ball.r, ball.alpha)
                members.append(ext + pert.scaled(scale * ball.R / size))
            pairs.append(tuple(members))
        return pairs

    return family


def measure_contraction(spec: NonlinearOperatorSpec, u0, grid: TorusGrid, deltas: Sequence[float],
                        dt: float = 1e-4, alpha: float = 0.5, pairs: PairFamily | None = None,
                        R: float | None = None, **norm_kw) -> ContractionTable:
    """Empirical Lipschitz factor of G on Y for each horizon, and its log-log slope in delta."""
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim == grid.n:
        u0 = u0[None]
    r = spec.order
    pairs = pairs or default_pairs()
    linop = frozen_linearization(spec, u0, grid)
    factors, used = [], []
    for delta in deltas:
        radius = R if R is not None else initial_radius(spec, u0, grid, delta, dt, r, alpha, linop, **norm_kw)
        ball = BallSpec(u0, grid, radius, delta, _steps_for(delta, dt), spec.tube_radius, r, alpha)
        G = _Map(spec, ball, linop)
        best, count = 0.0, 0
        for u, v in pairs(ball):
            if not (ball.contains(u, **norm_kw) and ball.contains(v, **norm_kw)):
                raise ValueError(f"pair member outside Y at delta={delta}")
            duv = parabolic_norm(u - v, r, alpha, **norm_kw)
            if duv == 0:
                warnings.warn("skipping pair with u == v")
                continue
            best = max(best, parabolic_norm(G(u) - G(v), r, alpha, **norm_kw) / duv)
            count += 1
        factors.append(best)
        used.append(count)
    deltas = np.asarray(deltas, dtype=float)
    factors = np.asarray(factors)
    if np.all(factors > 0) and len(deltas) >= 2:
        slope, intercept = np.polyfit(np.log(deltas), np.log(factors), 1)
    else:
        slope, intercept = np.nan, np.nan
    return ContractionTable(deltas, factors, float(slope), float(intercept), used)


def verify_uniqueness(spec: NonlinearOperatorSpec, u0, grid: TorusGrid, delta: float,
                      starts: Sequence[Callable[[BallSpec], SpaceTimeSection] | None],
                      dt: float = 1e-4, tol: float = 1e-9, alpha: float = 0.5, max_iter: int = 60,
                      **norm_kw) -> float:
    """Parabolic-norm distance between the fixed points reached from two starts in Y."""
    if len(starts) != 2:
        raise ValueError("need exactly two starts")
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim == grid.n:
        u0 = u0[None]
    r = spec.order
    linop = frozen_linearization(spec, u0, grid)
    R = initial_radius(spec, u0, grid, delta, dt, r, alpha, linop, **norm_kw)
    ball = BallSpec(u0, grid, R, delta, _steps_for(delta, dt), spec.tube_radius, r, alpha)
    limits = []
    for start in starts:
        first = start(ball) if start is not None else None
        if first is not None and not ball.contains(first, **norm_kw):
            raise ValueError("start is not in Y")
        sol, _, converged = iterate(spec, ball, first, tol, max_iter, linop, **norm_kw)
        if not converged:
            raise NoContractionHorizon("fixed-point iteration did not converge from one of the starts")
        limits.append(sol)
    return parabolic_norm(limits[0] - limits[1], r, alpha, **norm_kw)


@dataclass
class BootstrapRow:
    direction: int
    multiple: int
    h: float
    norm: float


def difference_quotient(u: SpaceTimeSection, direction: int, multiple: int) -> SpaceTimeSection:
    """``(u(x + h e_i, t) - u(x, t)) / h`` with ``h = multiple * dx`` on the torus."""
    axis = 2 + direction
    h = multiple * u.grid.spacing
    return u.replace((np.roll(u.values, -multiple, axis=axis) - u.values) / h)


def bootstrap_diagnostic(solution: SpaceTimeSection, r: int, alpha: float,
                         h_values: Sequence[float] | None = None, **norm_kw):
    """Parabolic norms of difference quotients over decreasing ``h``.

    Returns ``(rows, reference)`` where ``reference[i]`` is the norm of the
    spectral derivative in direction ``i``, the ``h -> 0`` limit.
    """
    dx = solution.grid.spacing
    if h_values is None:
        h_values = [4 * dx, 2 * dx, dx]
    multiples = []
    for h in h_values:
        m = h / dx
        if m < 1 - 1e-9 or abs(m - round(m)) > 1e-9:
            raise ValueError(f"h={h} is not a positive multiple of the grid spacing {dx}")
        multiples.append(int(round(m)))
    rows, reference = [], []
    for i in range(solution.grid.n):
        I = (i,)
        ders = spectral_derivatives(solution.values, solution.grid, [I])[I]
        reference.append(parabolic_norm(solution.replace(ders), r, alpha, **norm_kw))
        for m in multiples:
            q = difference_quotient(solution, i, m)
            rows.append(BootstrapRow(i, m, m * dx, parabolic_norm(q, r, alpha, **norm_kw)))
    return rows, reference
