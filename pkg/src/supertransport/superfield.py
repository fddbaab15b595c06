"""Calculus on S x R^{1|1}: theta-expansions, odd derivations, group structure.

A field psi = a(t) + theta*b(t) is stored through its two theta-components,
each sampled on a uniform grid of graded matrices.  Time derivatives use
fourth-order finite differences (one-sided at the ends); off-grid values use
quartic Lagrange interpolation, and evaluation at points whose time
coordinate carries a nilpotent soul uses the terminating Taylor series with
derivatives taken from the grid.

The odd derivations supported are

    D = d/dtheta + theta d/dt        (squares to +d/dt, right invariant)
    Q = d/dtheta - theta d/dt        (squares to -d/dt, left invariant)

acting as D(a + theta*b) = b + theta*a',  Q(a + theta*b) = b - theta*a'.

Points of R^{1|1} carry the group law (t, theta)(t', theta') =
(t + t' + theta*theta', theta + theta') with identity (0, 0) and inverse
(-t, -theta).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, DomainError, ParityError, ResolutionError
from .grassmann import GradedMatrix, GrassmannElement, Parity, scale_stack

# Fourth-order first-derivative stencils on a uniform grid.
_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


@dataclass(frozen=True)
class SuperPoint:
    """An S-point (t, theta) of R^{1|1}: t even, theta odd."""

    t: GrassmannElement
    theta: GrassmannElement

    def __post_init__(self):
        if self.t.n != self.theta.n:
            raise DimensionError("t and theta live over different algebras")
        if self.t.odd_part().norm() != 0.0:
            raise ParityError("time coordinate must be even")
        if self.theta.even_part().norm() != 0.0:
            raise ParityError("theta coordinate must be odd")
        if not np.isfinite(self.t.body):
            raise DomainError("time coordinate has non-finite body")

    @property
    def n(self) -> int:
        return self.t.n

    @classmethod
    def identity(cls, n: int) -> "SuperPoint":
        return cls(GrassmannElement.zero(n), GrassmannElement.zero(n))

    @classmethod
    def at(cls, n: int, t: float, theta: GrassmannElement | None = None) -> "SuperPoint":
        return cls(GrassmannElement.scalar(n, t),
                   theta if theta is not None else GrassmannElement.zero(n))

    def compose(self, other: "SuperPoint") -> "SuperPoint":
        """Group product self * other."""
        if self.n != other.n:
            raise DimensionError("points live over different algebras")
        t = self.t + other.t + self.theta * other.theta
        return SuperPoint(t, self.theta + other.theta)

    def __mul__(self, other: "SuperPoint") -> "SuperPoint":
        return self.compose(other)

    def inverse(self) -> "SuperPoint":
        return SuperPoint(-self.t, -self.theta)

    def __lt__(self, other: "SuperPoint") -> bool:
        """Partial order: p < q iff q * p^{-1} has strictly positive body."""
        return (other.compose(self.inverse())).t.body > 0.0

    def allclose(self, other: "SuperPoint", tol: float = 1e-12) -> bool:
        return self.t.allclose(other.t, tol) and self.theta.allclose(other.theta, tol)

    def to_json_dict(self) -> dict:
        return {"t": self.t.to_json_dict(), "theta": self.theta.to_json_dict()}

    @classmethod
    def from_json_dict(cls, n: int, data: Mapping) -> "SuperPoint":
        return cls(GrassmannElement.from_json_dict(n, data["t"]),
                   GrassmannElement.from_json_dict(n, data["theta"]))


def group_mul(p: SuperPoint, q: SuperPoint) -> SuperPoint:
    return p.compose(q)


def group_inv(p: SuperPoint) -> SuperPoint:
    return p.inverse()


def super_lt(p: SuperPoint, q: SuperPoint) -> bool:
    return p < q


@dataclass(frozen=True)
class Grid:
    """Uniform time grid t0 + k*h, k = 0..nodes-1."""

    t0: float
    h: float
    nodes: int

    def __post_init__(self):
        if self.nodes < 2 or self.h <= 0.0:
            raise ResolutionError("grid needs at least two nodes and positive step")

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * (self.nodes - 1)

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.nodes)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        k = (t - self.t0) / self.h
        ki = int(round(k))
        if abs(k - ki) > tol or not 0 <= ki < self.nodes:
            raise DomainError(f"time {t} is not a node of the grid")
        return ki

    def contains(self, t: float, slack: float = 1e-9) -> bool:
        return self.t0 - slack <= t <= self.t_end + slack

    @classmethod
    def over(cls, t_start: float, t_stop: float, nodes: int) -> "Grid":
        if nodes < 2:
            raise ResolutionError("grid needs at least two nodes")
        lo, hi = (t_start, t_stop) if t_start <= t_stop else (t_stop, t_start)
        if hi == lo:
            raise ResolutionError("grid window has zero width")
        return cls(lo, (hi - lo) / (nodes - 1), nodes)


def fd4_stack(stack: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative along axis 0 of a node stack."""
    m = stack.shape[0]
    if m < 5:
        raise ResolutionError("differentiation needs at least 5 grid nodes")
    out = np.empty_like(stack)
    flat = stack.reshape(m, -1)
    oflat = out.reshape(m, -1)
    oflat[0] = _EDGE0 @ flat[:5]
    oflat[1] = _EDGE1 @ flat[:5]
    for k in range(2, m - 2):
        oflat[k] = _INTERIOR @ flat[k - 2:k + 3]
    oflat[m - 2] = -(_EDGE1 @ flat[m - 5:][::-1])
    oflat[m - 1] = -(_EDGE0 @ flat[m - 5:][::-1])
    return out / h


def lagrange_weights(ts: np.ndarray, t: float) -> np.ndarray:
    w = np.ones(len(ts))
    for k in range(len(ts)):
        for l in range(len(ts)):
            if l != k:
                w[k] *= (t - ts[l]) / (ts[k] - ts[l])
    return w


def interpolate_stack(grid: Grid, stack: np.ndarray, t: float) -> np.ndarray:
    """Quartic Lagrange interpolation of a node stack at a real time."""
    if not grid.contains(t):
        raise DomainError(f"time {t} outside grid window [{grid.t0}, {grid.t_end}]")
    if grid.nodes < 5:
        raise ResolutionError("interpolation needs at least 5 grid nodes")
    center = int(round((t - grid.t0) / grid.h))
    start = min(max(center - 2, 0), grid.nodes - 5)
    ts = grid.t0 + grid.h * np.arange(start, start + 5)
    w = lagrange_weights(ts, t)
    return np.tensordot(w, stack[start:start + 5], axes=(0, 0))


class SuperField:
    """A (matrix-valued) function a(t) + theta*b(t) on S x R^{1|1}.

    ``a`` and ``b`` are stacks of graded-matrix components sharing one grid;
    ``a_parity``/``b_parity`` are the declared parities of the two halves
    (for a field of homogeneous value parity they are opposite).
    """

    __slots__ = ("grid", "n", "a", "b", "row_split", "col_split",
                 "a_parity", "b_parity", "_dcache")

    def __init__(self, grid: Grid, n: int, a: np.ndarray, b: np.ndarray,
                 row_split: tuple[int, int], col_split: tuple[int, int],
                 a_parity: Parity | None, b_parity: Parity | None):
        r = row_split[0] + row_split[1]
        c = col_split[0] + col_split[1]
        want = (grid.nodes, 1 << n, r, c)
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != want or b.shape != want:
            raise DimensionError(f"component stacks must have shape {want}")
        self.grid = grid
        self.n = n
        self.a = a.copy()
        self.b = b.copy()
        self.a.setflags(write=False)
        self.b.setflags(write=False)
        self.row_split = tuple(row_split)
        self.col_split = tuple(col_split)
        self.a_parity = a_parity
        self.b_parity = b_parity
        self._dcache: dict = {}

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_matrices(cls, grid: Grid, a_nodes: Sequence[GradedMatrix],
                      b_nodes: Sequence[GradedMatrix]) -> "SuperField":
        if len(a_nodes) != grid.nodes or len(b_nodes) != grid.nodes:
            raise DimensionError("node count mismatch")
        first = a_nodes[0]
        a = np.stack([m.comps for m in a_nodes])
        b = np.stack([m.comps for m in b_nodes])
        return cls(grid, first.n, a, b, first.row_split, first.col_split,
                   a_nodes[0].parity, b_nodes[0].parity)

    @property
    def value_parity(self) -> Parity | None:
        return self.a_parity

    # -- node access and interpolation --------------------------------------

    def a_matrix(self, k: int) -> GradedMatrix:
        return GradedMatrix(self.n, self.a[k], self.row_split, self.col_split,
                            self.a_parity, check=False)

    def b_matrix(self, k: int) -> GradedMatrix:
        return GradedMatrix(self.n, self.b[k], self.row_split, self.col_split,
                            self.b_parity, check=False)

    def a_at(self, t: float) -> GradedMatrix:
        return GradedMatrix(self.n, interpolate_stack(self.grid, self.a, t),
                            self.row_split, self.col_split, self.a_parity, check=False)

    def b_at(self, t: float) -> GradedMatrix:
        return GradedMatrix(self.n, interpolate_stack(self.grid, self.b, t),
                            self.row_split, self.col_split, self.b_parity, check=False)

    def _derivative_stack(self, which: str, order: int) -> np.ndarray:
        key = (which, order)
        if key not in self._dcache:
            if order == 0:
                self._dcache[key] = self.a if which == "a" else self.b
            else:
                self._dcache[key] = fd4_stack(self._derivative_stack(which, order - 1), self.grid.h)
        return self._dcache[key]

    def _taylor_stack_at(self, which: str, t: GrassmannElement,
                         max_order: int | None = None) -> np.ndarray:
        if t.odd_part().norm() != 0.0:
            raise ParityError("time argument must be even")
        body = t.body
        soul = t.soul()
        comps = interpolate_stack(self.grid, self._derivative_stack(which, 0), body)
        if soul.norm() != 0.0:
            limit = self.n if max_order is None else max_order
            power = GrassmannElement.one(self.n)
            fact = 1.0
            for k in range(1, limit + 1):
                power = power * soul
                fact *= k
                if power.norm() == 0.0:
                    break
                dstack = interpolate_stack(self.grid, self._derivative_stack(which, k), body)
                comps = comps + scale_stack(self.n, power.comps / fact, dstack, side="left")
        return comps

    def a_taylor_at(self, t: GrassmannElement, max_order: int | None = None) -> GradedMatrix:
        """Evaluate the theta^0 part at an even time with nilpotent soul."""
        return GradedMatrix(self.n, self._taylor_stack_at("a", t, max_order),
                            self.row_split, self.col_split, self.a_parity, check=False)

    def b_taylor_at(self, t: GrassmannElement, max_order: int | None = None) -> GradedMatrix:
        return GradedMatrix(self.n, self._taylor_stack_at("b", t, max_order),
                            self.row_split, self.col_split, self.b_parity, check=False)

    def value_at(self, point: SuperPoint) -> GradedMatrix:
        """Evaluate a(t) + theta*b(t) at a point of R^{1|1}(S)."""
        if point.n != self.n:
            raise DimensionError("point lives over a different algebra")
        return self.a_taylor_at(point.t) + self.b_taylor_at(point.t).scale_left(point.theta)

    # -- derivations ---------------------------------------------------------

    def apply_derivation(self, which: str) -> "SuperField":
        """Apply D, Q, or dt to the field.

        D(a + theta b) = b + theta a';  Q(a + theta b) = b - theta a';
        dt(a + theta b) = a' + theta b'.
        """
        if self.grid.nodes < 5:
            raise ResolutionError("derivation needs at least 5 grid nodes")
        da = self._derivative_stack("a", 1)
        if which == "D":
            return SuperField(self.grid, self.n, self.b, da, self.row_split,
                              self.col_split, self.b_parity, self.a_parity)
        if which == "Q":
            return SuperField(self.grid, self.n, self.b, -da, self.row_split,
                              self.col_split, self.b_parity, self.a_parity)
        if which == "dt":
            db = self._derivative_stack("b", 1)
            return SuperField(self.grid, self.n, da, db, self.row_split,
                              self.col_split, self.a_parity, self.b_parity)
        raise ValueError(f"unknown derivation {which!r}; expected 'D', 'Q' or 'dt'")

    def dd_identity_check(self, dt_reference: "SuperField | None" = None) -> tuple[float, float]:
        """Max-norm residuals of (DD - dt) and (QQ + dt) applied to the field."""
        dt = dt_reference if dt_reference is not None else self.apply_derivation("dt")
        dd = self.apply_derivation("D").apply_derivation("D")
        qq = self.apply_derivation("Q").apply_derivation("Q")
        res_d = max(float(np.max(np.abs(dd.a - dt.a))), float(np.max(np.abs(dd.b - dt.b))))
        res_q = max(float(np.max(np.abs(qq.a + dt.a))), float(np.max(np.abs(qq.b + dt.b))))
        return res_d, res_q

    # -- algebra -------------------------------------------------------------

    def __add__(self, other: "SuperField") -> "SuperField":
        self._check_same_grid(other)
        return SuperField(self.grid, self.n, self.a + other.a, self.b + other.b,
                          self.row_split, self.col_split,
                          self.a_parity if self.a_parity == other.a_parity else None,
                          self.b_parity if self.b_parity == other.b_parity else None)

    def __sub__(self, other: "SuperField") -> "SuperField":
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> "SuperField":
        return SuperField(self.grid, self.n, self.a * factor, self.b * factor,
                          self.row_split, self.col_split, self.a_parity, self.b_parity)

    def matmul(self, other: "SuperField") -> "SuperField":
        """Pointwise product (a + theta b)(a' + theta b') with graded signs."""
        self._check_same_grid(other)
        if self.col_split != other.row_split:
            raise DimensionError("block structure mismatch in field product")
        out_a = []
        out_b = []
        for k in range(self.grid.nodes):
            lhs_a = self.a_matrix(k)
            lhs_b = self.b_matrix(k)
            rhs_a = other.a_matrix(k)
            rhs_b = other.b_matrix(k)
            # (a + th b)(a' + th b') = a a' + th (b a' + eps(a) b')
            out_a.append(lhs_a @ rhs_a)
            out_b.append(lhs_b @ rhs_a + lhs_a.parity_involution() @ rhs_b)
        return SuperField.from_matrices(self.grid, out_a, out_b)

    def _check_same_grid(self, other: "SuperField"):
        if self.grid != other.grid or self.n != other.n:
            raise DimensionError("fields live on different grids or algebras")

    def norm(self) -> float:
        return max(float(np.max(np.abs(self.a))), float(np.max(np.abs(self.b))))

    def distance(self, other: "SuperField") -> float:
        self._check_same_grid(other)
        return max(float(np.max(np.abs(self.a - other.a))),
                   float(np.max(np.abs(self.b - other.b))))

    def parity_residual(self) -> float:
        """How far the stacks are from their declared parities (0 when clean)."""
        res = 0.0
        for stack, parity in ((self.a, self.a_parity), (self.b, self.b_parity)):
            if parity is None:
                continue
            probe = GradedMatrix(self.n, stack[0], self.row_split, self.col_split, None, check=False)
            g = np.array([k.bit_count() % 2 for k in range(1 << self.n)])
            want = parity ^ probe._block_parity()
            bad = g[None, :, None, None] != want[None, None, :, :]
            vals = np.abs(stack)[np.broadcast_to(bad, stack.shape)]
            if vals.size:
                res = max(res, float(vals.max()))
        return res

    # -- substitution ---------------------------------------------------------

    def substitute(self, new_grid: Grid, sign: float, shift: GrassmannElement,
                   rho: GrassmannElement, tau: GrassmannElement, e: float) -> "SuperField":
        """Precompose with (u, eta) -> (sign*u + shift + eta*rho, tau + e*eta).

        ``shift`` is even, ``rho`` and ``tau`` odd.  This is the theta-expansion
        bookkeeping for right translations, the inversion map, and their
        compositions: with s = sign*u + shift,

            A(u) = a(s) + tau*b(s)
            B(u) = rho*a'(s) + e*b(s) - tau*rho*b'(s)
        """
        if shift.soul().norm() != 0.0:
            raise DimensionError("field substitution supports real shifts only; "
                                 "use path-level substitution for soulful shifts")
        da = self._derivative_stack("a", 1)
        db = self._derivative_stack("b", 1)
        rho_tau_zero = rho.norm() == 0.0 and tau.norm() == 0.0
        taurho = (tau * rho) if not rho_tau_zero else None
        new_a = []
        new_b = []
        for u in new_grid.times():
            s = sign * u + shift.body
            a_s = interpolate_stack(self.grid, self.a, s)
            b_s = interpolate_stack(self.grid, self.b, s)
            da_s = interpolate_stack(self.grid, da, s)
            db_s = interpolate_stack(self.grid, db, s)
            A = a_s + scale_stack(self.n, tau.comps, b_s, side="left")
            B = scale_stack(self.n, rho.comps, da_s, side="left") + e * b_s
            if taurho is not None:
                B = B - scale_stack(self.n, taurho.comps, db_s, side="left")
            new_a.append(A)
            new_b.append(B)
        return SuperField(new_grid, self.n, np.stack(new_a), np.stack(new_b),
                          self.row_split, self.col_split, self.a_parity, self.b_parity)

    def right_translated(self, point: SuperPoint, new_grid: Grid) -> "SuperField":
        """Precompose with the right translation (u, eta) -> (u, eta)(t0, th0)."""
        return self.substitute(new_grid, 1.0, point.t, point.theta, point.theta, 1.0)

    def inverted(self, new_grid: Grid) -> "SuperField":
        """Precompose with the inversion (u, eta) -> (-u, -eta)."""
        n = self.n
        zero = GrassmannElement.zero(n)
        return self.substitute(new_grid, -1.0, zero, zero, zero, -1.0)

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "grid": {"t0": self.grid.t0, "h": self.grid.h, "nodes": self.grid.nodes},
            "n": self.n,
            "row_split": list(self.row_split),
            "col_split": list(self.col_split),
            "a_parity": None if self.a_parity is None else int(self.a_parity),
            "b_parity": None if self.b_parity is None else int(self.b_parity),
            "a": [self.a_matrix(k).to_json_dict()["entries"] for k in range(self.grid.nodes)],
            "b": [self.b_matrix(k).to_json_dict()["entries"] for k in range(self.grid.nodes)],
        }
