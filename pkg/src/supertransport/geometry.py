"""Chart-level geometric data on R^{p|q} and the pullbacks feeding the solvers.

Everything is chart-local: the target is a single coordinate patch R^{p|q}
with a trivialized rank re|ro bundle over it.  The building blocks are

* `Curve` -- a Grassmann-valued smooth function of one real parameter with an
  exact (or finite-difference) derivative chain; paths, substituted paths and
  reparametrized paths are all made of these;
* `SuperPath` -- the theta-expansion x_i(t) + theta*y_i(t) of a supercurve
  into R^{p|q}, one (even, odd) curve pair per coordinate;
* `GrassmannPoly` -- a function on R^{p|q}: a finite sum of even-variable
  polynomial (or smooth-oracle) coefficients times monomials in the odd
  coordinates; vector-field and connection coefficients live here;
* `DifferentialForm`, `Connection`, `Superconnection` -- the transported data.

Sign conventions: theta-expansions are kept in left-normal form (theta
written to the left), and every commutation sign is derived from Grassmann
multiplication by adjoining theta as one extra generator during assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DegreeError, DimensionError, DomainError, ParityError
from .grassmann import (
    AlgebraMap,
    GrassmannElement,
    Parity,
    PolyMap,
    mul_components,
    scale_stack,
    taylor_eval_stack,
)
from .superfield import Grid, SuperField, SuperPoint

_FD_STEP = 1e-3


class Curve:
    """A Grassmann-valued smooth function of one real parameter.

    A curve knows how to evaluate itself and how to produce its derivative
    curve.  Exact derivative chains are attached by the constructors below;
    when none is available the derivative falls back to a fourth-order
    central difference of the values.
    """

    __slots__ = ("n", "_fn", "_derivative_factory", "_derivative", "_memo")

    def __init__(self, n: int, fn: Callable[[float], GrassmannElement],
                 derivative: "Callable[[], Curve] | None" = None):
        self.n = n
        self._fn = fn
        self._derivative_factory = derivative
        self._derivative: Curve | None = None
        self._memo: dict[float, GrassmannElement] = {}

    def __call__(self, t: float) -> GrassmannElement:
        # values are immutable; grid-based consumers hit the same nodes often
        hit = self._memo.get(t)
        if hit is None:
            hit = self._fn(t)
            if len(self._memo) < 4096:
                self._memo[t] = hit
        return hit

    def derivative(self) -> "Curve":
        if self._derivative is None:
            if self._derivative_factory is not None:
                self._derivative = self._derivative_factory()
            else:
                self._derivative = _fd_curve(self)
        return self._derivative

    def nth_derivative(self, k: int) -> "Curve":
        cur = self
        for _ in range(k):
            cur = cur.derivative()
        return cur

    def eval_grassmann(self, t: GrassmannElement, max_order: int | None = None) -> GrassmannElement:
        """Evaluate at an even time with nilpotent soul (terminating Taylor)."""
        if t.n != self.n:
            raise DimensionError("time argument lives over a different algebra")
        if t.odd_part().norm() != 0.0:
            raise ParityError("time argument must be even")
        body = t.body
        soul = t.soul()
        value = self(body)
        if soul.norm() == 0.0:
            return value
        limit = self.n if max_order is None else max_order
        power = GrassmannElement.one(self.n)
        fact = 1.0
        cur = self
        for k in range(1, limit + 1):
            power = power * soul
            fact *= k
            if power.norm() == 0.0:
                break
            cur = cur.derivative()
            value = value + (power * cur(body)) / fact
        return value

    # -- combinators ---------------------------------------------------------

    def __add__(self, other: "Curve") -> "Curve":
        self._check(other)
        return Curve(self.n, lambda t: self(t) + other(t),
                     lambda: self.derivative() + other.derivative())

    def __sub__(self, other: "Curve") -> "Curve":
        self._check(other)
        return Curve(self.n, lambda t: self(t) - other(t),
                     lambda: self.derivative() - other.derivative())

    def __neg__(self) -> "Curve":
        return self.scale_left(-1.0)

    def scale_left(self, u) -> "Curve":
        if isinstance(u, (int, float)):
            u = GrassmannElement.scalar(self.n, float(u))
        return Curve(self.n, lambda t: u * self(t),
                     lambda: self.derivative().scale_left(u))

    def __mul__(self, other: "Curve") -> "Curve":
        """Pointwise product, left factor first (order matters)."""
        self._check(other)
        return Curve(self.n, lambda t: self(t) * other(t),
                     lambda: self.derivative() * other + self * other.derivative())

    def compose(self, inner: "Curve") -> "Curve":
        """self(inner(u)) for a real-valued (body-only) inner curve."""
        def fn(u: float) -> GrassmannElement:
            s = inner(u)
            return self.eval_grassmann(s) if s.soul().norm() else self(s.body)

        return Curve(self.n, fn,
                     lambda: self.derivative().compose(inner) * inner.derivative())

    def power(self, exponent: float) -> "Curve":
        """Real power of a real-valued curve (used for sqrt of r')."""
        def fn(t: float) -> GrassmannElement:
            v = self(t)
            if v.soul().norm() != 0.0:
                raise DomainError("power law applies to real-valued curves only")
            return GrassmannElement.scalar(self.n, v.body ** exponent)

        return Curve(self.n, fn,
                     lambda: self.power(exponent - 1.0).scale_left(exponent) * self.derivative())

    def shifted(self, sign: float, shift: GrassmannElement) -> "Curve":
        """The curve u -> self(sign*u + shift), shift an even element."""
        if shift.odd_part().norm() != 0.0:
            raise ParityError("time shifts must be even")
        body = shift.body
        soul = shift.soul()

        if soul.norm() == 0.0:
            def fn(u: float) -> GrassmannElement:
                return self(sign * u + body)
        else:
            def fn(u: float) -> GrassmannElement:
                return self.eval_grassmann(shift + sign * u)

        return Curve(self.n, fn,
                     lambda: self.derivative().shifted(sign, shift).scale_left(sign))

    def mapped(self, hom: AlgebraMap) -> "Curve":
        return Curve(hom.n_to, lambda t: hom.apply(self(t)),
                     lambda: self.derivative().mapped(hom))

    def _check(self, other: "Curve"):
        if self.n != other.n:
            raise DimensionError("curves live over different algebras")

    # -- constructors ----------------------------------------------------------

    @classmethod
    def constant(cls, n: int, value) -> "Curve":
        if isinstance(value, (int, float)):
            value = GrassmannElement.scalar(n, float(value))
        zero = GrassmannElement.zero(n)
        c = cls(n, lambda t: value)
        c._derivative_factory = lambda: Curve.constant(n, zero)
        return c

    @classmethod
    def polynomial(cls, n: int, coeffs: Sequence) -> "Curve":
        """sum_k coeffs[k] * t^k with Grassmann (or float) coefficients."""
        gcoeffs = [c if isinstance(c, GrassmannElement) else GrassmannElement.scalar(n, float(c))
                   for c in coeffs]
        if not gcoeffs:
            gcoeffs = [GrassmannElement.zero(n)]

        def fn(t: float) -> GrassmannElement:
            acc = GrassmannElement.zero(n)
            tp = 1.0
            for c in gcoeffs:
                acc = acc + c * tp
                tp *= t
            return acc

        def dfactory() -> Curve:
            dcoeffs = [c * float(k) for k, c in enumerate(gcoeffs)][1:]
            return Curve.polynomial(n, dcoeffs or [GrassmannElement.zero(n)])

        return cls(n, fn, dfactory)

    @classmethod
    def identity_map(cls, n: int) -> "Curve":
        return cls.polynomial(n, [0.0, 1.0])

    @classmethod
    def harmonic(cls, n: int, amplitude, omega: float, phase: float = 0.0,
                 offset=0.0, kind: str = "cos") -> "Curve":
        """amplitude*cos(omega t + phase) + offset (or sin)."""
        if isinstance(amplitude, (int, float)):
            amplitude = GrassmannElement.scalar(n, float(amplitude))
        if isinstance(offset, (int, float)):
            offset = GrassmannElement.scalar(n, float(offset))
        trig = math.cos if kind == "cos" else math.sin

        def fn(t: float) -> GrassmannElement:
            return amplitude * trig(omega * t + phase) + offset

        def dfactory() -> Curve:
            # d/dt cos = -omega sin; d/dt sin = omega cos
            if kind == "cos":
                return Curve.harmonic(n, amplitude * (-omega), omega, phase, 0.0, "sin")
            return Curve.harmonic(n, amplitude * omega, omega, phase, 0.0, "cos")

        return cls(n, fn, dfactory)

    @classmethod
    def from_samples(cls, n: int, grid: Grid, values: Sequence[GrassmannElement]) -> "Curve":
        """Quartic interpolation of sampled values; derivatives via FD4 stacks."""
        from .superfield import fd4_stack, interpolate_stack

        stack = np.stack([v.comps for v in values])[:, :, None, None]

        def make(stk: np.ndarray) -> Curve:
            def fn(t: float) -> GrassmannElement:
                return GrassmannElement(n, interpolate_stack(grid, stk, t)[:, 0, 0])
            return Curve(n, fn, lambda: make(fd4_stack(stk, grid.h)))

        return make(stack)


def _fd_curve(base: Curve, h: float = _FD_STEP) -> Curve:
    def fn(t: float) -> GrassmannElement:
        return (base(t - 2 * h) - 8.0 * base(t - h) + 8.0 * base(t + h) - base(t + 2 * h)) / (12.0 * h)

    return Curve(base.n, fn)


# ---------------------------------------------------------------------------
# Grassmann-polynomial functions on R^{p|q}
# ---------------------------------------------------------------------------


class GrassmannPoly:
    """A function on R^{p|q}: sum_J f_J(x) * z^J over odd-coordinate monomials.

    ``terms`` maps strictly increasing tuples of odd-coordinate indices
    (0-based within the odd block) to smooth coefficient maps of the p even
    variables.  Coefficients may be scalar- or matrix-valued but must share
    one shape.  The coefficient is always written to the left of the odd
    monomial.

    When ``lambda_n`` is set the coefficient maps are valued in component
    vectors of the scalar algebra on ``lambda_n`` generators (families of
    functions parametrized by S); the payload multiplies from the left.
    """

    __slots__ = ("p", "q", "terms", "coeff_shape", "lambda_n", "rank")

    def __init__(self, p: int, q: int, terms: Mapping[tuple[int, ...], object],
                 lambda_n: int | None = None, rank: tuple[int, int] | None = None):
        self.p = p
        self.q = q
        self.lambda_n = lambda_n
        self.rank = tuple(rank) if rank is not None else None
        shape = None
        norm: dict[tuple[int, ...], object] = {}
        for J, f in terms.items():
            J = tuple(int(j) for j in J)
            if any(not 0 <= j < q for j in J) or list(J) != sorted(set(J)):
                raise DimensionError(f"bad odd multi-index {J} for q={q}")
            if f.nvars != p:
                raise DimensionError("coefficient arity does not match p")
            if shape is None:
                shape = f.coeff_shape
            elif f.coeff_shape != shape:
                raise DimensionError("coefficients must share one shape")
            if getattr(f, "is_zero", lambda: False)():
                continue
            norm[J] = f
        self.terms = norm
        self.coeff_shape = shape if shape is not None else ()
        if self.rank is not None and self.coeff_shape != (sum(self.rank),) * 2:
            raise DimensionError("rank split does not match the coefficient shape")

    @classmethod
    def from_even(cls, p: int, q: int, f) -> "GrassmannPoly":
        return cls(p, q, {(): f})

    @classmethod
    def constant(cls, p: int, q: int, value) -> "GrassmannPoly":
        return cls(p, q, {(): PolyMap.constant(p, value)})

    @classmethod
    def lambda_constant(cls, p: int, q: int, value: GrassmannElement,
                        odd_indices: tuple[int, ...] = ()) -> "GrassmannPoly":
        """A constant coefficient in the scalar algebra times an odd monomial."""
        return cls(p, q, {tuple(odd_indices): PolyMap.constant(p, value.comps)},
                   lambda_n=value.n)

    @classmethod
    def zero(cls, p: int, q: int, shape: tuple[int, ...] = (),
             rank: tuple[int, int] | None = None) -> "GrassmannPoly":
        return cls(p, q, {(): PolyMap.zero(p, shape)}, rank=rank)

    def value_stack(self, coords: Sequence[GrassmannElement],
                    order: int | None = None, n: int | None = None) -> np.ndarray:
        """Component stack of the value at graded coordinates.

        The first p coordinate values must be even elements, the last q odd.
        Result shape: (2**n,) + coeff_shape.  For the empty chart the algebra
        size must be passed explicitly.
        """
        if len(coords) != self.p + self.q:
            raise DimensionError(f"expected {self.p + self.q} coordinates")
        if coords:
            n = coords[0].n
        elif n is None:
            raise DimensionError("value on the empty chart needs the algebra size")
        evens = list(coords[:self.p])
        odds = list(coords[self.p:])
        for z in odds:
            if z.even_part().norm() != 0.0:
                raise ParityError("odd coordinate value must be odd")
        dim = 1 << n
        shape = () if self.lambda_n is not None else self.coeff_shape
        out = np.zeros((dim,) + tuple(np.shape(np.zeros(shape))))
        for J, f in self.terms.items():
            coeff = taylor_eval_stack(f, evens, order=order, n=n)
            if self.lambda_n is not None:
                if 1 << self.lambda_n > dim:
                    raise DimensionError("coefficient algebra larger than coordinate algebra")
                contracted = np.zeros(dim)
                for m in range(1 << self.lambda_n):
                    col = coeff[:, m]
                    if not np.any(col):
                        continue
                    basis = np.zeros(dim)
                    basis[m] = 1.0
                    contracted += mul_components(n, col, basis)
                coeff = contracted
            zprod = None
            for j in J:
                zprod = odds[j].comps if zprod is None else mul_components(n, zprod, odds[j].comps)
            if zprod is None:
                out = out + coeff
            elif coeff.ndim == 1:
                out = out + mul_components(n, coeff, zprod)
            else:
                # value semantics: pullbacks act entrywise on the scalars
                out = out + scale_stack(n, zprod, coeff, side="right")
        return out

    def value(self, coords: Sequence[GrassmannElement]) -> GrassmannElement:
        stack = self.value_stack(coords)
        if stack.ndim != 1:
            raise DimensionError("value() expects a scalar-valued function")
        n = coords[0].n if coords else 0
        return GrassmannElement(n, stack)

    def partial(self, i: int) -> "GrassmannPoly":
        """Left partial derivative with respect to coordinate i (0-based)."""
        if i < self.p:
            terms = {J: f.partial(i) for J, f in self.terms.items()}
            return GrassmannPoly(self.p, self.q, terms, self.lambda_n, self.rank)
        j = i - self.p
        terms: dict[tuple[int, ...], object] = {}
        for J, f in self.terms.items():
            if j not in J:
                continue
            pos = J.index(j)
            rest = J[:pos] + J[pos + 1:]
            sign = -1.0 if pos % 2 else 1.0
            if self.lambda_n is not None:
                pay = self._payload_parity(f)
                if pay is None:
                    raise ParityError("odd derivative needs a homogeneous family payload")
                sign *= -1.0 if pay else 1.0
            g = f * sign
            terms[rest] = terms[rest] + g if rest in terms else g
        if not terms:
            return GrassmannPoly.zero(self.p, self.q, self.coeff_shape, self.rank)
        return GrassmannPoly(self.p, self.q, terms, self.lambda_n, self.rank)

    def _payload_parity(self, f) -> int | None:
        from .grassmann import grades_of

        if self.lambda_n is None:
            return 0
        g = grades_of(self.lambda_n) % 2
        seen: set[int] = set()
        for coeff in f.terms.values():
            arr = np.atleast_1d(np.asarray(coeff, dtype=float))
            for m in np.nonzero(arr)[0]:
                seen.add(int(g[m]))
        if len(seen) > 1:
            return None
        return seen.pop() if seen else 0

    def __add__(self, other: "GrassmannPoly") -> "GrassmannPoly":
        if self.lambda_n != other.lambda_n:
            raise DimensionError("cannot add plain and family-valued coefficients")
        terms = dict(self.terms)
        for J, f in other.terms.items():
            terms[J] = terms[J] + f if J in terms else f
        return GrassmannPoly(self.p, self.q, terms, self.lambda_n,
                             self.rank if self.rank is not None else other.rank)

    def __mul__(self, other: "GrassmannPoly") -> "GrassmannPoly":
        """Product of scalar-valued Grassmann polynomials (left to right)."""
        if self.coeff_shape != () or other.coeff_shape != ():
            raise DimensionError("only scalar Grassmann polynomials multiply")
        if self.lambda_n is not None or other.lambda_n is not None:
            raise DimensionError("products of family-valued coefficients are not supported")
        terms: dict[tuple[int, ...], object] = {}
        for Ja, fa in self.terms.items():
            for Jb, fb in other.terms.items():
                if set(Ja) & set(Jb):
                    continue
                sign, J = _merge_odd_indices(Ja, Jb)
                f = (fa * fb) * sign
                terms[J] = terms[J] + f if J in terms else f
        if not terms:
            return GrassmannPoly.zero(self.p, self.q)
        return GrassmannPoly(self.p, self.q, terms)

    def parity_of_terms(self) -> Parity | None:
        """Parity contributed by the odd monomials, if homogeneous."""
        degrees = self.term_parities()
        if len(degrees) > 1:
            return None
        return Parity(degrees.pop()) if degrees else Parity.EVEN

    def _row_parities(self) -> np.ndarray:
        if self.rank is None:
            r = self.coeff_shape[0] if self.coeff_shape else 0
            return np.zeros(r, dtype=int)
        return np.array([0] * self.rank[0] + [1] * self.rank[1])

    def term_parities(self) -> set[int]:
        """Parities (0/1) present among the terms, payload included."""
        from .grassmann import grades_of

        out: set[int] = set()
        for J, f in self.terms.items():
            base = len(J) % 2
            if self.lambda_n is None:
                out.add(base)
            else:
                g = grades_of(self.lambda_n) % 2
                for coeff in f.terms.values():
                    arr = np.atleast_1d(np.asarray(coeff, dtype=float))
                    for m in np.nonzero(arr)[0]:
                        out.add((base + int(g[m])) % 2)
        return out


def _merge_odd_indices(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[float, tuple[int, ...]]:
    merged = list(a)
    sign = 1.0
    for idx in b:
        pos = len(merged)
        for k, m in enumerate(merged):
            if idx < m:
                pos = k
                break
        sign *= (-1.0) ** (len(merged) - pos)
        merged.insert(pos, idx)
    return sign, tuple(merged)


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------


class SuperVectorField:
    """A vector field sum_i a_i d/dx^i on R^{p|q} with scalar coefficients.

    For a field of parity pi the coefficient of an even coordinate has
    parity pi and the coefficient of an odd coordinate has parity pi+1.
    Applied to functions with coefficients on the left:
    X(f) = sum_i a_i * (d f / d x^i).
    """

    __slots__ = ("p", "q", "parity", "coeffs")

    def __init__(self, p: int, q: int, parity: Parity, coeffs: Sequence[GrassmannPoly]):
        if len(coeffs) != p + q:
            raise DimensionError(f"expected {p + q} coefficients")
        for i, c in enumerate(coeffs):
            if c.p != p or c.q != q:
                raise DimensionError("coefficients must be scalar functions on R^{p|q}")
            if c.lambda_n is None and c.coeff_shape != ():
                raise DimensionError("coefficients must be scalar functions on R^{p|q}")
            want = parity ^ (0 if i < p else 1)
            bad = c.term_parities() - {want}
            if bad:
                raise ParityError(
                    f"coefficient {i} has terms of parity {bad}, field parity requires {want}")
        self.p = p
        self.q = q
        self.parity = parity
        self.coeffs = tuple(coeffs)

    def apply(self, f: GrassmannPoly) -> GrassmannPoly:
        out = None
        for i, a in enumerate(self.coeffs):
            term = a * f.partial(i)
            out = term if out is None else out + term
        return out if out is not None else GrassmannPoly.zero(self.p, self.q)

    def squared(self) -> "SuperVectorField":
        """For an odd field X, the even field X^2 = (1/2)[X, X]."""
        if self.parity is not Parity.ODD:
            raise ParityError("squared() applies to odd vector fields")
        coords = [GrassmannPoly(self.p, self.q, {(): PolyMap(self.p, {_unit_expo(self.p, i): 1.0})})
                  if i < self.p else
                  GrassmannPoly(self.p, self.q, {(i - self.p,): PolyMap.constant(self.p, 1.0)})
                  for i in range(self.p + self.q)]
        new_coeffs = [self.apply(self.apply(x)) for x in coords]
        return SuperVectorField(self.p, self.q, Parity.EVEN, new_coeffs)

    def coefficient_values(self, coords: Sequence[GrassmannElement]) -> list[GrassmannElement]:
        return [c.value(coords) for c in self.coeffs]


def _unit_expo(p: int, i: int) -> tuple[int, ...]:
    e = [0] * p
    e[i] = 1
    return tuple(e)


# ---------------------------------------------------------------------------
# Superpaths
# ---------------------------------------------------------------------------


class SuperPath:
    """A chart-level supercurve into R^{p|q}.

    Coordinate i pulls back to a_i(t) + theta*b_i(t); the a-curves of the
    first p coordinates are even and their b-partners odd, reversed for the
    q odd coordinates.  The path is defined for all t its curves accept, and
    declares a window [0, t_end] (plus a validation margin) on which it is
    meant to be used.
    """

    __slots__ = ("p", "q", "n", "a", "b", "t_end", "margin")

    def __init__(self, p: int, q: int, n: int, a: Sequence[Curve], b: Sequence[Curve],
                 t_end: float, margin: float | None = None):
        if len(a) != p + q or len(b) != p + q:
            raise DimensionError(f"expected {p + q} coordinate curve pairs")
        self.p = p
        self.q = q
        self.n = n
        self.a = tuple(a)
        self.b = tuple(b)
        self.t_end = float(t_end)
        self.margin = 1e-2 * max(abs(self.t_end), 1.0) if margin is None else margin

    # -- evaluation ------------------------------------------------------------

    def coordinate_values(self, t: float) -> list[GrassmannElement]:
        return [c(t) for c in self.a]

    def theta_values(self, t: float) -> list[GrassmannElement]:
        return [c(t) for c in self.b]

    def value(self, point: SuperPoint) -> list[GrassmannElement]:
        """Coordinates of the path at an S-point of R^{1|1}."""
        out = []
        for ca, cb in zip(self.a, self.b):
            out.append(ca.eval_grassmann(point.t) + point.theta * cb.eval_grassmann(point.t))
        return out

    def velocity_curves(self) -> tuple[Curve, ...]:
        return tuple(c.derivative() for c in self.a)

    def endpoint(self, point: SuperPoint) -> list[GrassmannElement]:
        return self.value(point)

    def contains_time(self, t: float) -> bool:
        lo, hi = min(0.0, self.t_end), max(0.0, self.t_end)
        return lo - self.margin <= t <= hi + self.margin

    # -- validation --------------------------------------------------------------

    def parity_residual(self, samples: int = 5) -> float:
        res = 0.0
        for t in np.linspace(0.0, self.t_end if self.t_end else 1.0, samples):
            for i in range(self.p + self.q):
                a_val = self.a[i](t)
                b_val = self.b[i](t)
                if i < self.p:
                    res = max(res, a_val.odd_part().norm(), b_val.even_part().norm())
                else:
                    res = max(res, a_val.even_part().norm(), b_val.odd_part().norm())
        return res

    def validate(self, tol: float = 0.0):
        r = self.parity_residual()
        if r > tol:
            raise ParityError(f"path components violate coordinate parities by {r}")

    # -- substitution -------------------------------------------------------------

    def substituted(self, g: Curve, rho: GrassmannElement, tau: GrassmannElement,
                    e: "Curve | float", t_end: float) -> "SuperPath":
        """Precompose with (u, eta) -> (g(u) + eta*rho, tau + e(u)*eta).

        Components transform (left-normal form in the new odd coordinate) as

            A(u) = a(g(u)) + tau * b(g(u))
            B(u) = rho * a'(g(u)) + e(u) * b(g(u)) - tau*rho * b'(g(u))
        """
        if isinstance(e, (int, float)):
            e_curve = Curve.constant(self.n, float(e))
        else:
            e_curve = e
        taurho = tau * rho
        new_a = []
        new_b = []
        for ca, cb in zip(self.a, self.b):
            a_g = ca.compose(g)
            b_g = cb.compose(g)
            da_g = ca.derivative().compose(g)
            db_g = cb.derivative().compose(g)
            A = a_g + b_g.scale_left(tau)
            B = da_g.scale_left(rho) + e_curve * b_g
            if taurho.norm() != 0.0:
                B = B - db_g.scale_left(taurho)
            new_a.append(A)
            new_b.append(B)
        return SuperPath(self.p, self.q, self.n, new_a, new_b, t_end, self.margin)

    def _affine(self, sign: float, shift: GrassmannElement) -> Curve:
        base = Curve.polynomial(self.n, [shift, GrassmannElement.scalar(self.n, sign)])
        return base

    def translated(self, point: SuperPoint, t_end: float | None = None) -> "SuperPath":
        """Precompose with the right translation (u, eta) -> (u, eta)(t0, th0)."""
        g = self._affine(1.0, point.t)
        end = self.t_end - point.t.body if t_end is None else t_end
        return self.substituted(g, point.theta, point.theta, 1.0, end)

    def reversed_through(self, end: SuperPoint) -> "SuperPath":
        """The reversal u -> c((u, eta)^{-1}(t0, th0)) on [0, body(t0)]."""
        g = self._affine(-1.0, end.t)
        return self.substituted(g, -end.theta, end.theta, -1.0, end.t.body)

    def shifted_by_inverse(self, point: SuperPoint, t_end: float) -> "SuperPath":
        """Precompose with (u, eta) -> (u, eta)(t0, th0)^{-1} (gluing branch)."""
        g = self._affine(1.0, -point.t)
        return self.substituted(g, -point.theta, -point.theta, 1.0, t_end)

    def reparametrized(self, r: Curve, new_t_end: float) -> "SuperPath":
        """Precompose with (u, eta) -> (r(u), sqrt(r'(u)) eta)."""
        e = r.derivative().power(0.5)
        return self.substituted(r, GrassmannElement.zero(self.n),
                                GrassmannElement.zero(self.n), e, new_t_end)

    def mapped(self, hom: AlgebraMap) -> "SuperPath":
        return SuperPath(self.p, self.q, hom.n_to,
                         [c.mapped(hom) for c in self.a],
                         [c.mapped(hom) for c in self.b],
                         self.t_end, self.margin)

    @classmethod
    def piecewise(cls, first: "SuperPath", second: "SuperPath", switch: float,
                  t_end: float) -> "SuperPath":
        """Concatenation that follows `first` below the switch time."""
        if (first.p, first.q, first.n) != (second.p, second.q, second.n):
            raise DimensionError("piecewise pieces have different targets")

        def join(c1: Curve, c2: Curve) -> Curve:
            return Curve(first.n, lambda t: c1(t) if t < switch else c2(t),
                         lambda: join(c1.derivative(), c2.derivative()))

        a = [join(c1, c2) for c1, c2 in zip(first.a, second.a)]
        b = [join(c1, c2) for c1, c2 in zip(first.b, second.b)]
        return cls(first.p, first.q, first.n, a, b, t_end,
                   max(first.margin, second.margin))

    # -- builders -------------------------------------------------------------------

    @classmethod
    def line(cls, n: int, start: Sequence, velocity: Sequence, theta_parts: Sequence,
             t_end: float, p: int | None = None, q: int = 0) -> "SuperPath":
        """Straight path start + t*velocity with constant theta-components."""
        ncoords = len(start)
        p = ncoords - q if p is None else p

        def lift(v):
            return v if isinstance(v, GrassmannElement) else GrassmannElement.scalar(n, float(v))

        a = [Curve.polynomial(n, [lift(s), lift(v)]) for s, v in zip(start, velocity)]
        b = [Curve.constant(n, lift(h)) for h in theta_parts]
        return cls(p, q, n, a, b, t_end)

    @classmethod
    def from_polynomials(cls, n: int, even_coeffs: Sequence[Sequence],
                         theta_coeffs: Sequence[Sequence], t_end: float,
                         p: int | None = None, q: int = 0) -> "SuperPath":
        ncoords = len(even_coeffs)
        p = ncoords - q if p is None else p
        a = [Curve.polynomial(n, list(cs)) for cs in even_coeffs]
        b = [Curve.polynomial(n, list(cs)) for cs in theta_coeffs]
        return cls(p, q, n, a, b, t_end)

    @classmethod
    def circle(cls, n: int, center: Sequence[float], radius: float, omega: float,
               theta_parts: Sequence, t_end: float, plane: tuple[int, int] = (0, 1),
               phase: float = 0.0) -> "SuperPath":
        p = len(center)
        a = []
        for i, c in enumerate(center):
            if i == plane[0]:
                a.append(Curve.harmonic(n, radius, omega, phase, c, "cos"))
            elif i == plane[1]:
                a.append(Curve.harmonic(n, radius, omega, phase, c, "sin"))
            else:
                a.append(Curve.constant(n, c))
        def lift(v):
            return v if isinstance(v, GrassmannElement) else GrassmannElement.scalar(n, float(v))
        b = [Curve.constant(n, lift(h)) for h in theta_parts]
        return cls(p, 0, n, a, b, t_end)


# ---------------------------------------------------------------------------
# Forms, connections, superconnections
# ---------------------------------------------------------------------------


class DifferentialForm:
    """A k-form on R^p valued in endomorphisms of the rank re|ro fiber.

    Components are indexed by strictly increasing tuples of 1-based
    coordinate indices; each component is a matrix-valued polynomial (or
    smooth oracle) in the even coordinates.  The total parity is
    (degree + endomorphism parity) mod 2.
    """

    __slots__ = ("degree", "p", "rank", "endo_parity", "components")

    def __init__(self, degree: int, p: int, rank: tuple[int, int],
                 endo_parity: Parity, components: Mapping[tuple[int, ...], object]):
        if degree > p:
            raise DegreeError(f"degree {degree} exceeds chart dimension {p}")
        r = rank[0] + rank[1]
        self.degree = degree
        self.p = p
        self.rank = tuple(rank)
        self.endo_parity = endo_parity
        comp: dict[tuple[int, ...], object] = {}
        for I, f in components.items():
            I = tuple(int(i) for i in I)
            if len(I) != degree or list(I) != sorted(set(I)) or any(not 1 <= i <= p for i in I):
                raise DimensionError(f"bad form index {I} for degree {degree}, p={p}")
            if f.nvars != p or f.coeff_shape != (r, r):
                raise DimensionError("component must be a (r x r)-valued map of the even variables")
            _check_block_parity(np.stack([np.asarray(c) for c in f.terms.values()]),
                                rank, endo_parity)
            comp[I] = f
        self.components = comp

    @property
    def total_parity(self) -> Parity:
        return Parity((self.degree + self.endo_parity) % 2)

    @classmethod
    def constant_form(cls, degree: int, p: int, rank: tuple[int, int],
                      endo_parity: Parity, matrices: Mapping[tuple[int, ...], np.ndarray]) -> "DifferentialForm":
        comps = {I: PolyMap.constant(p, np.asarray(m, dtype=np.float64))
                 for I, m in matrices.items()}
        return cls(degree, p, rank, endo_parity, comps)

    def wedge(self, other: "DifferentialForm") -> "DifferentialForm":
        """Graded wedge product (Koszul sign for the endomorphism parts)."""
        if self.p != other.p or self.rank != other.rank:
            raise DimensionError("wedge operands live on different charts")
        sign0 = (-1.0) ** (self.endo_parity * other.degree)
        comps: dict[tuple[int, ...], object] = {}
        for Ia, fa in self.components.items():
            for Ib, fb in other.components.items():
                if set(Ia) & set(Ib):
                    continue
                sign, I = _merge_odd_indices(Ia, Ib)
                term = fa.matmul(fb) * (sign * sign0)
                comps[I] = comps[I] + term if I in comps else term
        return DifferentialForm(self.degree + other.degree, self.p, self.rank,
                                Parity((self.endo_parity + other.endo_parity) % 2), comps)


def _check_block_parity(coeff_stack: np.ndarray, rank: tuple[int, int], parity: Parity):
    re, ro = rank
    rows = np.array([0] * re + [1] * ro)
    block = rows[:, None] ^ rows[None, :]
    bad = coeff_stack[:, block != parity]
    if bad.size and float(np.max(np.abs(bad))) != 0.0:
        raise ParityError("matrix coefficients violate the declared endomorphism parity")


class Connection:
    """A connection d + a on the trivialized rank re|ro bundle over R^{p|q}.

    ``coeffs[i]`` is the End-valued coefficient of the i-th coordinate
    differential, a Grassmann polynomial on R^{p|q}.  The operator is even:
    coefficients of even differentials have even total parity, coefficients
    of odd differentials odd total parity.
    """

    __slots__ = ("p", "q", "rank", "coeffs")

    def __init__(self, p: int, q: int, rank: tuple[int, int],
                 coeffs: Sequence[GrassmannPoly]):
        if len(coeffs) != p + q:
            raise DimensionError(f"expected {p + q} connection coefficients")
        r = rank[0] + rank[1]
        norm_coeffs = []
        for i, c in enumerate(coeffs):
            if c.p != p or c.q != q or c.coeff_shape != (r, r):
                raise DimensionError("connection coefficient has wrong arity or shape")
            if c.rank is None:
                c = GrassmannPoly(p, q, c.terms, c.lambda_n, rank)
            elif c.rank != tuple(rank):
                raise DimensionError("connection coefficient has a different rank split")
            norm_coeffs.append(c)
        coeffs = norm_coeffs
        for i, c in enumerate(coeffs):
            want_total = Parity(0 if i < p else 1)
            for J, f in c.terms.items():
                _check_block_parity(np.stack([np.asarray(cc) for cc in f.terms.values()]),
                                    rank, Parity((want_total + len(J)) % 2))
        self.p = p
        self.q = q
        self.rank = tuple(rank)
        self.coeffs = tuple(coeffs)

    @classmethod
    def zero(cls, p: int, q: int, rank: tuple[int, int]) -> "Connection":
        r = rank[0] + rank[1]
        return cls(p, q, rank, [GrassmannPoly.zero(p, q, (r, r), rank) for _ in range(p + q)])

    @classmethod
    def from_matrix_polys(cls, p: int, rank: tuple[int, int],
                          polys: Sequence[PolyMap]) -> "Connection":
        """Ordinary-manifold case: q = 0, one matrix polynomial per dx^i."""
        coeffs = [GrassmannPoly(p, 0, {(): f}, rank=rank) for f in polys]
        return cls(p, 0, rank, coeffs)


@dataclass(frozen=True)
class Superconnection:
    """Quillen data: a grading-preserving connection plus odd-total forms.

    The form part must not contain degree 1 (that slot is the connection) and
    every summand has odd total parity: a k-form with endomorphism parity
    (1 + k) mod 2.
    """

    connection: Connection
    forms: tuple[DifferentialForm, ...] = ()

    def __post_init__(self):
        if self.connection.q != 0:
            raise DimensionError("superconnection transport works over an ordinary base")
        object.__setattr__(self, "forms", tuple(self.forms))
        for w in self.forms:
            if w.degree == 1:
                raise DimensionError("degree-1 data belongs to the connection part")
            if w.total_parity is not Parity.ODD:
                raise ParityError("form part must have odd total parity")
            if w.p != self.connection.p or w.rank != self.connection.rank:
                raise DimensionError("form part lives on a different chart or rank")

    @property
    def p(self) -> int:
        return self.connection.p

    @property
    def rank(self) -> tuple[int, int]:
        return self.connection.rank


# ---------------------------------------------------------------------------
# Pullback assembly
# ---------------------------------------------------------------------------


def connection_coefficient(path: SuperPath, conn: Connection, grid: Grid,
                           variant: str = "D") -> SuperField:
    """The End-valued field obtained by contracting the pulled-back
    connection form with D (or Q) along the path.

    Per coordinate the differential contributes b_i(t) + theta*a_i'(t) for D
    and b_i(t) - theta*a_i'(t) for Q; the coefficient is evaluated at the
    full theta-expanded coordinates.  All signs are produced by Grassmann
    multiplication with theta adjoined as one extra generator.
    """
    if (path.p, path.q) != (conn.p, conn.q):
        raise DimensionError("path and connection targets differ")
    if variant not in ("D", "Q"):
        raise ValueError("variant must be 'D' or 'Q'")
    n = path.n
    n_hat = n + 1
    theta_sign = 1.0 if variant == "D" else -1.0
    theta_hat = GrassmannElement.generator(n_hat, n_hat)
    re, ro = conn.rank
    r = re + ro
    rows_par = np.array([0] * re + [1] * ro)
    adots = [c.derivative() for c in path.a]

    a_nodes = np.zeros((grid.nodes, 1 << n, r, r))
    b_nodes = np.zeros((grid.nodes, 1 << n, r, r))
    for k, t in enumerate(grid.times()):
        coords_hat = [
            path.a[i](t).promoted(n_hat) + theta_hat * path.b[i](t).promoted(n_hat)
            for i in range(path.p + path.q)
        ]
        acc = np.zeros((1 << n_hat, r, r))
        for i in range(path.p + path.q):
            factor = path.b[i](t).promoted(n_hat) + theta_sign * (theta_hat * adots[i](t).promoted(n_hat))
            if factor.norm() == 0.0:
                continue
            coeff = conn.coeffs[i].value_stack(coords_hat, n=n_hat)
            acc = acc + scale_stack(n_hat, factor.comps, coeff, side="right")
        a_nodes[k], b_nodes[k] = _theta_split_stack(n, acc)
    return SuperField(grid, n, a_nodes, b_nodes, (re, ro), (re, ro),
                      Parity.ODD, Parity.EVEN)


def _theta_split_stack(n: int, stack_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a stack over the (n+1)-generator algebra as A + theta_hat*B."""
    dim = 1 << n
    a = stack_hat[:dim].copy()
    b = np.empty_like(a)
    for key in range(dim):
        sign = -1.0 if key.bit_count() & 1 else 1.0
        b[key] = sign * stack_hat[dim + key]
    return a, b


def lift_pullback(path: SuperPath, form: DifferentialForm, grid: Grid) -> SuperField:
    """Pull a form back along the odd-tangent lift of the path.

    The theta^0 part evaluates the form on the odd component data
    (dx^i -> b_i(t)); the theta^1 part does the same with the exterior
    derivative of the form.  Works for ordinary targets (q = 0).
    """
    if path.q != 0:
        raise DimensionError("form pullback requires an ordinary target (q = 0)")
    if form.degree > path.p:
        raise DegreeError(f"form degree {form.degree} exceeds target dimension {path.p}")
    n = path.n
    re, ro = form.rank
    r = re + ro
    rows_par = np.array([0] * re + [1] * ro)
    a_nodes = np.zeros((grid.nodes, 1 << n, r, r))
    b_nodes = np.zeros((grid.nodes, 1 << n, r, r))
    for k, t in enumerate(grid.times()):
        xs = [path.a[i](t) for i in range(path.p)]
        etas = [path.b[i](t) for i in range(path.p)]
        acc_a = np.zeros((1 << n, r, r))
        acc_b = np.zeros((1 << n, r, r))
        for I, f in form.components.items():
            eta_prod = None
            for i in I:
                eta_prod = etas[i - 1].comps if eta_prod is None else mul_components(n, eta_prod, etas[i - 1].comps)
            coeff = taylor_eval_stack(f, xs, n=n)
            if eta_prod is None:
                acc_a = acc_a + coeff
            else:
                acc_a = acc_a + scale_stack(n, eta_prod, coeff, side="right")
            # theta part: (d_j component)(x) * eta_j * eta^I, component leftmost
            for j in range(1, path.p + 1):
                dj = taylor_eval_stack(f.partial(j - 1), xs, n=n)
                prod = etas[j - 1].comps if eta_prod is None else mul_components(n, etas[j - 1].comps, eta_prod)
                acc_b = acc_b + scale_stack(n, prod, dj, side="right")
        a_nodes[k] = acc_a
        b_nodes[k] = acc_b
    total = form.total_parity
    return SuperField(grid, n, a_nodes, b_nodes, (re, ro), (re, ro),
                      total, total.flipped())


def superconnection_coefficient(path: SuperPath, sc: Superconnection, grid: Grid,
                                variant: str = "D", form_scale: float = 1.0) -> SuperField:
    """Coefficient field of the parallel-section equation along the path.

    D-variant: (pullback of the connection contracted with D) minus the
    lifted form part; Q-variant: the Q-contraction plus the lifted form part
    (the relative sign is what makes reversed transport invert the forward
    one).  ``form_scale`` rescales the form part (adiabatic sweeps).
    """
    field = connection_coefficient(path, sc.connection, grid, variant)
    sign = -1.0 if variant == "D" else 1.0
    for w in sc.forms:
        field = field + lift_pullback(path, w, grid).scaled(sign * form_scale)
    return field


def endomorphism_term(path: SuperPath, endo: GrassmannPoly, grid: Grid,
                      rank: tuple[int, int]) -> SuperField:
    """The field obtained by evaluating an End-valued function along the path.

    Used for transport data of the form (connection, odd endomorphism) on a
    supermanifold target; theta enters through the coordinate expansions and
    is split off by adjoining it as one extra generator.
    """
    if (endo.p, endo.q) != (path.p, path.q):
        raise DimensionError("endomorphism lives on a different chart")
    r = rank[0] + rank[1]
    if endo.coeff_shape != (r, r):
        raise DimensionError("endomorphism shape does not match the rank")
    n = path.n
    n_hat = n + 1
    theta_hat = GrassmannElement.generator(n_hat, n_hat)
    a_nodes = np.zeros((grid.nodes, 1 << n, r, r))
    b_nodes = np.zeros((grid.nodes, 1 << n, r, r))
    for k, t in enumerate(grid.times()):
        coords_hat = [
            path.a[i](t).promoted(n_hat) + theta_hat * path.b[i](t).promoted(n_hat)
            for i in range(path.p + path.q)
        ]
        stack = endo.value_stack(coords_hat, n=n_hat)
        a_nodes[k], b_nodes[k] = _theta_split_stack(n, stack)
    return SuperField(grid, n, a_nodes, b_nodes, tuple(rank), tuple(rank),
                      Parity.ODD, Parity.EVEN)


def odd_tangent_lift(path: SuperPath) -> SuperPath:
    """The lift of an ordinary-target path to the odd tangent bundle R^{p|p}.

    Even coordinates keep their expansions x_i(t) + theta*y_i(t); the new odd
    coordinates carry the odd data with no theta part: y_i(t) + theta*0.
    """
    if path.q != 0:
        raise DimensionError("odd tangent lift applies to ordinary targets")
    zero = Curve.constant(path.n, GrassmannElement.zero(path.n))
    a = list(path.a) + list(path.b)
    b = list(path.b) + [zero] * path.p
    return SuperPath(path.p, path.p, path.n, a, b, path.t_end, path.margin)


def odd_tangent_data(sc: Superconnection) -> tuple[Connection, GrassmannPoly]:
    """Superconnection data seen on the odd tangent bundle.

    The connection pulls back with no components along the new odd
    directions; the form part becomes a single End-valued function with the
    form indices turned into odd-coordinate monomials.
    """
    p = sc.p
    re, ro = sc.rank
    r = re + ro
    coeffs = [GrassmannPoly(p, p, {(): c.terms.get((), PolyMap.zero(p, (r, r)))}, rank=(re, ro))
              for c in sc.connection.coeffs]
    coeffs += [GrassmannPoly.zero(p, p, (r, r), (re, ro)) for _ in range(p)]
    conn = Connection(p, p, (re, ro), coeffs)
    endo_terms: dict[tuple[int, ...], PolyMap] = {}
    for w in sc.forms:
        for I, f in w.components.items():
            key = tuple(i - 1 for i in I)
            endo_terms[key] = endo_terms[key] + f if key in endo_terms else f
    if not endo_terms:
        endo_terms[()] = PolyMap.zero(p, (r, r))
    endo = GrassmannPoly(p, p, endo_terms, rank=(re, ro))
    return conn, endo


def chart_claim_residual(path: SuperPath, fns: Sequence[PolyMap],
                         ts: Sequence[float]) -> float:
    """Lifted pullback of functions vs the direct pullback (algebraic identity).

    For each sample function f the theta-expansion of f evaluated along the
    full path must equal (f along the base) + theta*(df contracted with the
    odd components).
    """
    if path.q != 0:
        raise DimensionError("claim check requires an ordinary target")
    n = path.n
    n_hat = n + 1
    theta_hat = GrassmannElement.generator(n_hat, n_hat)
    res = 0.0
    for f in fns:
        for t in ts:
            xs = [path.a[i](t) for i in range(path.p)]
            etas = [path.b[i](t) for i in range(path.p)]
            lift_a = taylor_eval_stack(f, xs, n=n)
            lift_b = np.zeros_like(lift_a)
            for j in range(path.p):
                dj = taylor_eval_stack(f.partial(j), xs, n=n)
                lift_b = lift_b + mul_components(n, etas[j].comps, dj)
            coords_hat = [xs[i].promoted(n_hat) + theta_hat * etas[i].promoted(n_hat)
                          for i in range(path.p)]
            direct = taylor_eval_stack(f, coords_hat, n=n_hat)
            da, db = _theta_split_scalar(n, direct)
            res = max(res, float(np.max(np.abs(da - lift_a))),
                      float(np.max(np.abs(db - lift_b))))
    return res


def _theta_split_scalar(n: int, comps_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dim = 1 << n
    a = comps_hat[:dim].copy()
    b = np.empty(dim)
    for key in range(dim):
        sign = -1.0 if key.bit_count() & 1 else 1.0
        b[key] = sign * comps_hat[dim + key]
    return a, b


def _as_matrix_poly(f: PolyMap) -> PolyMap:
    if f.coeff_shape == ():
        return PolyMap(f.nvars, {e: np.array([[c]]) for e, c in f.terms.items()})
    return f
