"""Jets, spectral differentiation on flat tori, linearization and principal symbols.

Sections of the trivial rank-``l`` bundle over ``T^n`` are stored component
first: an array of shape ``(l, *batch, N, ..., N)`` where the trailing ``n``
axes are the spatial grid and ``batch`` is an optional stack (usually time).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

AXIS_NAMES = "xyz"


class TubeViolation(ValueError):
    """A jet left the tube of radius R0 around the reference jet."""

    def __init__(self, distance, radius, worst_node):
        self.distance = float(distance)
        self.radius = float(radius)
        self.worst_node = worst_node
        super().__init__(
            f"tube-violation: jet distance {self.distance:.6g} exceeds R0={self.radius:.6g} "
            f"(worst node {worst_node})"
        )


class NotEllipticError(ValueError):
    pass


def canonical(index, n: int | None = None) -> tuple[int, ...]:
    """Canonical sorted multi-index from a tuple of axes or a string like ``"xy"``."""
    if isinstance(index, str):
        dirs = tuple(AXIS_NAMES.index(c) for c in index)
    else:
        dirs = tuple(int(i) for i in index)
    if n is not None and any(d < 0 or d >= n for d in dirs):
        raise ValueError(f"multi-index {index!r} out of range for n={n}")
    return tuple(sorted(dirs))


def multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    """All canonical multi-indices of length exactly ``order``."""
    return list(itertools.combinations_with_replacement(range(n), order))


def multi_indices_upto(n: int, r: int) -> list[tuple[int, ...]]:
    return [I for j in range(r + 1) for I in multi_indices(n, j)]


def index_name(I: tuple[int, ...]) -> str:
    return "".join(AXIS_NAMES[i] for i in I) or "u"


def jet_layout(n: int, r: int, l: int) -> list[tuple[int, tuple[int, ...]]]:
    """Ordering of jet components as ``(component b, multi-index I)`` pairs."""
    return [(b, I) for I in multi_indices_upto(n, r) for b in range(l)]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the flat torus ``[0, 2pi)^n``."""

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only T^1 and T^2 are supported")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"points per dimension must be even and >= 8, got {self.N}")

    period = 2 * np.pi

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def spacing(self) -> float:
        return self.period / self.N

    @property
    def volume(self) -> float:
        return self.period ** self.n

    @cached_property
    def nodes1d(self) -> np.ndarray:
        return self.spacing * np.arange(self.N)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.nodes1d] * self.n), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        return tuple(np.meshgrid(*([k] * self.n), indexing="ij"))

    @cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(sum(k**2 for k in self.wavenumbers))

    def multiplier(self, I: tuple[int, ...]) -> np.ndarray:
        """Fourier multiplier of ``d_I``; the Nyquist mode is dropped for odd per-axis orders."""
        mult = np.ones(self.shape, dtype=complex)
        for axis in range(self.n):
            m = I.count(axis)
            if m == 0:
                continue
            k = self.wavenumbers[axis].astype(complex)
            if m % 2:
                k = np.where(np.abs(self.wavenumbers[axis]) == self.N // 2, 0.0, k)
            mult = mult * (1j * k) ** m
        return mult

    def node(self, flat_index: int) -> tuple[float, ...]:
        idx = np.unravel_index(int(flat_index), self.shape)
        return tuple(float(self.nodes1d[i]) for i in idx)

    def evaluate(self, fn: Callable, *args) -> np.ndarray:
        """Sample ``fn(*coords, *args)`` on the grid."""
        return np.asarray(fn(*self.coords, *args), dtype=float)


def _spatial_axes(grid: TorusGrid, ndim: int) -> tuple[int, ...]:
    return tuple(range(ndim - grid.n, ndim))


def spectral_derivatives(values, grid: TorusGrid, indices) -> dict[tuple[int, ...], np.ndarray]:
    """Fourier derivatives ``d_I values`` for every multi-index in ``indices``."""
    values = np.asarray(values, dtype=float)
    axes = _spatial_axes(grid, values.ndim)
    vhat = np.fft.fftn(values, axes=axes)
    out = {}
    for I in indices:
        I = canonical(I, grid.n)
        if not I:
            out[I] = values.copy()
            continue
        out[I] = np.fft.ifftn(vhat * grid.multiplier(I), axes=axes).real
    return out


class Jet:
    """Pointwise r-jet ``(x, t, u, du, ..., d^r u)`` evaluated at every node at once.

    Derivatives are keyed by canonical multi-index; ``jet["xx"]`` or
    ``jet[(0, 0)]`` returns an array of shape ``(l, *batch, *grid.shape)``.
    """

    def __init__(self, grid: TorusGrid, t, derivs: Mapping[tuple[int, ...], np.ndarray], order: int):
        self.grid = grid
        self.t = t
        self.order = order
        self.derivs = dict(derivs)

    @property
    def x(self) -> tuple[np.ndarray, ...]:
        return self.grid.coords

    @property
    def u(self) -> np.ndarray:
        return self.derivs[()]

    @property
    def rank(self) -> int:
        return self.u.shape[0]

    def __getitem__(self, key) -> np.ndarray:
        return self.derivs[canonical(key, self.grid.n)]

    def layout(self):
        return jet_layout(self.grid.n, self.order, self.rank)

    def vector(self) -> np.ndarray:
        """Concatenated jet components, shape ``(ncomp, *batch, *grid.shape)``."""
        return np.stack([self.derivs[I][b] for b, I in self.layout()])

    def replace(self, b: int, I, value) -> "Jet":
        I = canonical(I, self.grid.n)
        arr = self.derivs[I].copy()
        arr[b] = value
        derivs = dict(self.derivs)
        derivs[I] = arr
        return Jet(self.grid, self.t, derivs, self.order)


def spectral_jet(section, grid: TorusGrid, r: int, t=0.0) -> Jet:
    """All canonical spatial derivatives up to order ``r`` at every node."""
    section = np.asarray(section, dtype=float)
    if not np.all(np.isfinite(section)):
        bad = np.argwhere(~np.isfinite(section))[0]
        raise ValueError(f"section has non-finite values (first at index {tuple(bad)})")
    if section.shape[-grid.n:] != grid.shape:
        raise ValueError(f"section shape {section.shape} does not end with grid shape {grid.shape}")
    return Jet(grid, t, spectral_derivatives(section, grid, multi_indices_upto(grid.n, r)), r)


def _broadcast_time(t, section: np.ndarray, grid: TorusGrid):
    """Reshape a per-batch time vector so it broadcasts against ``(*batch, *grid.shape)``."""
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return float(t)
    return t.reshape(t.shape + (1,) * grid.n)


@dataclass
class NonlinearOperatorSpec:
    """A nonlinear operator ``P_t(u) = F(x, t, u, du, ..., d^r u)``.

    ``F`` takes a :class:`Jet` and returns ``(l, *batch, *grid.shape)``.
    ``dF`` optionally returns the jet-space gradient with shape
    ``(l, ncomp, *batch, *grid.shape)`` in :func:`jet_layout` order.
    """

    order: int
    rank: int
    n: int
    F: Callable[[Jet], np.ndarray]
    dF: Callable[[Jet], np.ndarray] | None = None
    tube_radius: float = 10.0
    K1: float | None = None
    K2: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.order <= 0 or self.order % 2:
            raise ValueError(f"operator order must be even and positive, got {self.order}")
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if self.tube_radius <= 0:
            raise ValueError("tube radius must be positive")

    def layout(self):
        return jet_layout(self.n, self.order, self.rank)

    def apply_F(self, jet: Jet) -> np.ndarray:
        out = np.asarray(self.F(jet), dtype=float)
        target = jet.u.shape
        if out.shape == target:
            return out
        if self.rank == 1 and out.shape == target[1:]:
            return out[None]
        return np.broadcast_to(out, target).copy()

    def jet_gradient(self, jet: Jet) -> np.ndarray:
        if self.dF is not None:
            return np.asarray(self.dF(jet), dtype=float)
        return finite_difference_gradient(self, jet)


def finite_difference_gradient(spec: NonlinearOperatorSpec, jet: Jet) -> np.ndarray:
    """Central differences in jet space, step ``1e-6 * (1 + |z|)``."""
    cols = []
    for b, I in spec.layout():
        z = jet.derivs[I][b]
        h = 1e-6 * (1.0 + np.abs(z))
        plus = spec.apply_F(jet.replace(b, I, z + h))
        minus = spec.apply_F(jet.replace(b, I, z - h))
        col = (plus - minus) / (2 * h)
        if not np.all(np.isfinite(col)):
            raise FloatingPointError(f"finite-difference jet derivative diverged for component {(b, I)}")
        cols.append(col)
    return np.stack(cols, axis=1)


@dataclass
class Tube:
    """The set B: jets whose summed sup-distance to the reference jet is at most ``radius``."""

    center: Jet
    radius: float

    @classmethod
    def around(cls, u0, grid: TorusGrid, r: int, radius: float) -> "Tube":
        return cls(spectral_jet(u0, grid, r), radius)

    def distance(self, jet: Jet) -> tuple[float, int]:
        """Sum over orders of sup-norm distances, plus the flat index of the worst node."""
        n = self.center.grid.n
        total = 0.0
        pointwise = 0.0
        batch = jet.u.ndim - self.center.u.ndim
        for j in range(self.center.order + 1):
            diffs = []
            for I in multi_indices(n, j):
                c = self.center.derivs[I]
                c = c.reshape(c.shape[:1] + (1,) * batch + c.shape[1:])
                diffs.append(np.abs(jet.derivs[I] - c))
            per_node = np.max(np.stack(diffs), axis=0)
            # collapse components and any batch axes
            per_node = per_node.reshape(-1, *self.center.grid.shape).max(axis=0)
            total += float(per_node.max())
            pointwise = pointwise + per_node
        return total, int(np.argmax(pointwise))

    def check(self, jet: Jet) -> float:
        dist, worst = self.distance(jet)
        if dist > self.radius:
            raise TubeViolation(dist, self.radius, self.center.grid.node(worst))
        return self.radius - dist


def evaluate_operator(spec: NonlinearOperatorSpec, section, grid: TorusGrid, t=0.0,
                      tube: Tube | None = None) -> np.ndarray:
    """Pointwise ``F`` applied to the spectral jets of ``section``."""
    section = np.asarray(section, dtype=float)
    bare = section.ndim == grid.n
    if bare:
        section = section[None]
    jet = spectral_jet(section, grid, spec.order, _broadcast_time(t, section[0], grid))
    if tube is not None:
        tube.check(jet)
    out = spec.apply_F(jet)
    return out[0] if bare else out


class LinearOperatorSpec:
    """``(L_t u)^a = sum_I A^I_{ab}(x, t) d_I u^b`` with canonical multi-indices ``I``.

    ``coefficients`` maps multi-index to an array of shape ``(l, l, *grid.shape)``
    (anything broadcastable works), or is a callable ``t -> mapping`` for
    time-dependent operators.
    """

    def __init__(self, order: int, rank: int, grid: TorusGrid, coefficients):
        if order <= 0 or order % 2:
            raise ValueError("order must be even and positive")
        self.order = order
        self.rank = rank
        self.grid = grid
        if callable(coefficients):
            self._fn = coefficients
            self._static = None
        else:
            self._fn = None
            self._static = self._normalize(coefficients)

    def _normalize(self, coefficients) -> dict[tuple[int, ...], np.ndarray]:
        out = {}
        full = (self.rank, self.rank) + self.grid.shape
        for key, A in coefficients.items():
            I = canonical(key, self.grid.n)
            if len(I) > self.order:
                raise ValueError(f"multi-index {key!r} exceeds order {self.order}")
            A = np.asarray(A, dtype=float)
            if A.ndim == 0:
                A = A * np.eye(self.rank)
            if A.ndim == 2 and A.shape == (self.rank, self.rank):
                A = A.reshape(A.shape + (1,) * self.grid.n)
            A = np.broadcast_to(A, full).copy()
            if not np.all(np.isfinite(A)):
                raise ValueError(f"coefficient for {key!r} is not finite")
            out[I] = out.get(I, 0.0) + A
        return out

    @property
    def time_dependent(self) -> bool:
        return self._fn is not None

    def coefficients(self, t: float = 0.0) -> dict[tuple[int, ...], np.ndarray]:
        if self._fn is None:
            return self._static
        return self._normalize(self._fn(t))

    def top_coefficients(self, t: float = 0.0):
        return {I: A for I, A in self.coefficients(t).items() if len(I) == self.order}

    def apply(self, v, t: float = 0.0) -> np.ndarray:
        """Apply ``L_t`` to ``v`` of shape ``(l, *batch, *grid.shape)``."""
        v = np.asarray(v, dtype=float)
        coeffs = self.coefficients(t)
        derivs = spectral_derivatives(v, self.grid, coeffs.keys())
        out = np.zeros_like(v)
        for I, A in coeffs.items():
            out += _matvec(A, derivs[I], self.grid.n)
        return out

    def with_lower_order(self, extra: Mapping) -> "LinearOperatorSpec":
        coeffs = dict(self.coefficients())
        for key, A in self._normalize(extra).items():
            if len(key) == self.order:
                raise ValueError("with_lower_order only accepts lower-order terms")
            coeffs[key] = coeffs.get(key, 0.0) + A
        return LinearOperatorSpec(self.order, self.rank, self.grid, coeffs)


def _matvec(A: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Pointwise ``A(x) @ v(x)``; ``v`` may carry batch axes between component and space."""
    batch = v.ndim - 1 - n
    A = A.reshape(A.shape[:2] + (1,) * batch + A.shape[2:])
    return np.einsum("ab...,b...->a...", A, v)


def linearize(spec: NonlinearOperatorSpec, base, grid: TorusGrid, t: float = 0.0,
              tube: Tube | None = None) -> LinearOperatorSpec:
    """Frozen linearization ``P_{t*|u}`` at the section ``base``."""
    base = np.asarray(base, dtype=float)
    if base.ndim == grid.n:
        base = base[None]
    jet = spectral_jet(base, grid, spec.order, t)
    if tube is not None:
        tube.check(jet)
    grad = spec.jet_gradient(jet)
    coeffs: dict[tuple[int, ...], np.ndarray] = {}
    for col, (b, I) in enumerate(spec.layout()):
        A = coeffs.setdefault(I, np.zeros((spec.rank, spec.rank) + grid.shape))
        A[:, b] = grad[:, col]
    return LinearOperatorSpec(spec.order, spec.rank, grid, coeffs)


def principal_symbol(linop: LinearOperatorSpec, node, xi, t: float = 0.0) -> np.ndarray:
    """``sum_{|I|=r} A^I(x, t) xi_I`` at one node (flat index or grid index tuple)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (linop.grid.n,):
        raise ValueError(f"covector must have {linop.grid.n} entries")
    if not np.any(xi):
        raise ValueError("principal symbol needs a nonzero covector")
    if np.isscalar(node) or np.ndim(node) == 0:
        node = np.unravel_index(int(node), linop.grid.shape)
    sym = np.zeros((linop.rank, linop.rank))
    for I, A in linop.top_coefficients(t).items():
        sym += A[(slice(None), slice(None)) + tuple(node)] * np.prod(xi[list(I)])
    return sym


def symbol_field(linop: LinearOperatorSpec, xi, t: float = 0.0) -> np.ndarray:
    """Principal symbol at every node, shape ``(*grid.shape, l, l)``."""
    xi = np.asarray(xi, dtype=float)
    sym = np.zeros((linop.rank, linop.rank) + linop.grid.shape)
    for I, A in linop.top_coefficients(t).items():
        sym = sym + A * np.prod(xi[list(I)])
    return np.moveaxis(sym, (0, 1), (-2, -1))


def sphere_samples(n: int, n_xi: int) -> np.ndarray:
    """Deterministic unit covectors; doubling ``n_xi`` refines the previous set.

    Symbols of even order are even in ``xi``, so half the circle suffices.
    """
    if n == 1:
        return np.array([[1.0]])
    theta = np.pi * np.arange(n_xi) / n_xi
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


@dataclass
class EllipticityReport:
    lam: float
    worst_node: tuple[float, ...]
    worst_xi: np.ndarray
    worst_v: np.ndarray
    n_xi: int
    n_v: int
    elliptic: bool = field(init=False)

    def __post_init__(self):
        self.elliptic = bool(self.lam > 0)

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "elliptic": self.elliptic,
            "worst_node": list(self.worst_node),
            "worst_xi": self.worst_xi.tolist(),
            "worst_v": self.worst_v.tolist(),
            "n_xi": self.n_xi,
            "n_v": self.n_v,
        }


def check_strong_ellipticity(linop: LinearOperatorSpec, t: float = 0.0, n_xi: int = 64,
                             n_v: int = 0) -> EllipticityReport:
    """Legendre-Hadamard constant ``min (-1)^(r/2-1) <sigma(x, xi) v, v>`` over unit xi, v.

    The quadratic form only sees the symmetric part of the symbol, so the
    minimum over unit ``v`` is its smallest eigenvalue and is computed exactly.
    ``n_v`` is accepted for interface compatibility and reported as 0.
    """
    if n_xi < 1:
        raise ValueError("need at least one covector sample")
    sign = (-1) ** (linop.order // 2 - 1)
    best = (np.inf, None, None, None)
    for xi in sphere_samples(linop.grid.n, n_xi):
        sym = sign * symbol_field(linop, xi, t)
        sym = 0.5 * (sym + np.swapaxes(sym, -1, -2))
        w, vecs = np.linalg.eigh(sym)
        flat = w[..., 0].reshape(-1)
        node = int(np.argmin(flat))
        if flat[node] < best[0]:
            v = vecs.reshape(-1, linop.rank, linop.rank)[node][:, 0]
            best = (float(flat[node]), node, xi.copy(), v)
    lam, node, xi, v = best
    return EllipticityReport(lam, linop.grid.node(node), xi, v, n_xi=n_xi, n_v=0)
