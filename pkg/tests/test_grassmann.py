"""Scalar algebra, graded matrices, Taylor extension, graded exponential."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from supertransport.errors import CapabilityError, DimensionError, ParityError
from supertransport.grassmann import (
    AlgebraMap,
    GradedMatrix,
    GrassmannElement,
    Parity,
    PolyMap,
    SmoothMap,
    graded_expm,
    split_generator,
    taylor_eval,
)

from reference import (
    dict_distance,
    expm_oracle,
    expm_series_oracle,
    from_element,
    gmul,
)


def G(n):
    return GrassmannElement


def dyadic_elements(n, max_keys=4):
    """Hypothesis strategy: elements with dyadic coefficients (exact floats)."""
    key = st.integers(min_value=0, max_value=(1 << n) - 1)
    coeff = st.integers(min_value=-16, max_value=16).map(lambda k: k / 8.0)
    def build(pairs):
        comps = np.zeros(1 << n)
        for k, c in pairs:
            comps[k] += c
        return GrassmannElement(n, comps)
    return st.lists(st.tuples(key, coeff), max_size=max_keys).map(build)


class TestScalarAlgebra:
    def test_generator_product(self):
        e1 = GrassmannElement.generator(2, 1)
        e2 = GrassmannElement.generator(2, 2)
        assert (e1 * e2).terms() == {(1, 2): 1.0}
        assert (e2 * e1).terms() == {(1, 2): -1.0}
        assert (e1 * e1).norm() == 0.0

    def test_nilpotent_inverse_pair(self):
        one = GrassmannElement.one(2)
        e12 = GrassmannElement.monomial(2, (1, 2))
        assert (one + e12) * (one - e12) == one

    def test_mismatched_algebras(self):
        with pytest.raises(DimensionError):
            GrassmannElement.one(2) * GrassmannElement.one(3)

    @settings(max_examples=60, deadline=None)
    @given(dyadic_elements(3), dyadic_elements(3), dyadic_elements(3))
    def test_associative_and_matches_reference(self, u, v, w):
        assert (u * v) * w == u * (v * w)
        ref = gmul(from_element(u), from_element(v))
        assert dict_distance(ref, from_element(u * v)) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(dyadic_elements(3), dyadic_elements(3))
    def test_supercommutativity_on_homogeneous(self, u, v):
        for ua in (u.even_part(), u.odd_part()):
            for vb in (v.even_part(), v.odd_part()):
                sign = -1.0 if (ua.parity is Parity.ODD and vb.parity is Parity.ODD) else 1.0
                assert (ua * vb - (vb * ua) * sign).norm() == 0.0

    @settings(max_examples=30, deadline=None)
    @given(dyadic_elements(3), dyadic_elements(3))
    def test_body_is_homomorphism_and_soul_nilpotent(self, u, v):
        assert (u * v).body == u.body * v.body
        s = GrassmannElement.one(3)
        for _ in range(4):  # soul^(N+1) with N = 3
            s = s * u.soul()
        assert s.norm() == 0.0

    def test_parity_involution(self):
        u = GrassmannElement.from_terms(2, {(): 2.0, (1,): 3.0})
        assert u.parity_involution().terms() == {(): 2.0, (1,): -3.0}
        e1 = GrassmannElement.generator(2, 1)
        assert e1.parity_involution() == -e1
        even = GrassmannElement.from_terms(2, {(): 1.0, (1, 2): 1.0})
        assert even.parity_involution() == even

    @settings(max_examples=30, deadline=None)
    @given(dyadic_elements(3), dyadic_elements(3))
    def test_involution_is_automorphism(self, u, v):
        lhs = (u * v).parity_involution()
        rhs = u.parity_involution() * v.parity_involution()
        assert lhs == rhs
        assert u.parity_involution().parity_involution() == u

    @settings(max_examples=40, deadline=None)
    @given(dyadic_elements(3))
    def test_serialization_round_trip(self, u):
        data = u.to_json_dict()
        back = GrassmannElement.from_json_dict(3, data)
        assert back == u  # bit exact

    def test_split_generator(self):
        u = GrassmannElement.from_terms(3, {(1, 3): 2.0, (2,): 1.0, (): 0.5})
        a, b = split_generator(u, 3)
        assert a.terms() == {(2,): 1.0, (): 0.5}
        assert b.terms() == {(1,): -2.0}
        theta = GrassmannElement.generator(3, 3)
        assert (a + theta * b) == u


class TestTaylor:
    def test_square_at_one_plus_nilpotent(self):
        f = PolyMap(1, {(2,): 1.0})
        x = GrassmannElement.from_terms(2, {(): 1.0, (1, 2): 1.0})
        assert taylor_eval(f, [x]).terms() == {(): 1.0, (1, 2): 2.0}

    def test_sin_at_nilpotent(self):
        sin = SmoothMap(1, lambda a, x: math.sin(x[0] + a[0] * math.pi / 2), max_order=12)
        e12 = GrassmannElement.monomial(2, (1, 2))
        assert taylor_eval(sin, [e12]).allclose(e12, 1e-15)

    def test_odd_argument_rejected(self):
        f = PolyMap(1, {(1,): 1.0})
        with pytest.raises(ParityError):
            taylor_eval(f, [GrassmannElement.generator(2, 1)])

    def test_capability_error(self):
        x = GrassmannElement.from_terms(4, {(): 0.0, (1, 2): 1.0})
        y = GrassmannElement.from_terms(4, {(): 0.0, (3, 4): 1.0})
        with pytest.raises(CapabilityError):
            # two independent soul directions force total order 2 > max_order
            taylor_eval(SmoothMap(2, lambda a, x: 1.0, max_order=1), [x, y])

    def test_degree3_against_component_expansion(self, rng):
        # expand the soul symbolically over the 2^N components via the oracle
        import sympy
        coeffs = {k: float(rng.uniform(-1, 1)) for k in range(4)}
        f = PolyMap(1, {(k,): c for k, c in coeffs.items()})
        x = GrassmannElement.from_terms(
            3, {(): 0.7, (1, 2): 0.4, (1, 3): -0.6})
        got = from_element(taylor_eval(f, [x]))
        # oracle: substitute x = b + s1 e12 + s2 e13 and expand with sympy
        b, s1, s2 = sympy.symbols("b s1 s2")
        poly = sum(c * (b + s1 + s2) ** k for k, c in coeffs.items())
        expanded = sympy.expand(poly)
        want = {}
        for term in expanded.as_ordered_terms():
            s1_deg = term.as_poly(s1).degree() if term.has(s1) else 0
            s2_deg = term.as_poly(s2).degree() if term.has(s2) else 0
            if s1_deg > 1 or s2_deg > 1 or (s1_deg and s2_deg):
                continue  # nilpotency: e12^2 = e13^2 = e12*e13 = 0 in Lambda_3
            val = float(term.subs({b: 0.7, s1: 1, s2: 1}).subs({}))
            key = () if not (s1_deg or s2_deg) else ((1, 2) if s1_deg else (1, 3))
            want[key] = want.get(key, 0.0) + val * (0.4 if key == (1, 2) else -0.6 if key == (1, 3) else 1.0)
        assert dict_distance(got, want) < 1e-12

    def test_multiplicative(self, rng):
        f = PolyMap(2, {(1, 0): 0.5, (0, 2): -1.0})
        g = PolyMap(2, {(0, 0): 1.0, (1, 1): 2.0})
        x = GrassmannElement.from_terms(3, {(): 0.3, (1, 2): 0.2})
        y = GrassmannElement.from_terms(3, {(): -0.4, (2, 3): 0.5})
        lhs = taylor_eval(f * g, [x, y])
        rhs = taylor_eval(f, [x, y]) * taylor_eval(g, [x, y])
        assert (lhs - rhs).norm() < 1e-14


class TestGradedMatrix:
    def test_parity_check(self):
        bad = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ParityError):
            GradedMatrix.from_real(2, bad, (1, 1), (1, 1), Parity.EVEN)
        GradedMatrix.from_real(2, bad, (1, 1), (1, 1), Parity.ODD)

    def test_product_parity_bookkeeping(self, rng):
        def rand(parity):
            m = np.zeros((2, 2))
            if parity is Parity.EVEN:
                m[0, 0], m[1, 1] = rng.uniform(-1, 1, 2)
            else:
                m[0, 1], m[1, 0] = rng.uniform(-1, 1, 2)
            return GradedMatrix.from_real(2, m, (1, 1), (1, 1), parity)
        for p1 in (Parity.EVEN, Parity.ODD):
            for p2 in (Parity.EVEN, Parity.ODD):
                prod = rand(p1) @ rand(p2)
                assert prod.parity == Parity(p1 ^ p2)
                # even-declared products pass the strict block check
                GradedMatrix(prod.n, prod.comps, prod.row_split, prod.col_split, prod.parity)

    def test_graded_product_anticommutation(self):
        # odd endomorphism anticommutes with an odd scalar
        n = 1
        A = GradedMatrix.from_real(n, np.array([[0.0, 1.0], [1.0, 0.0]]), (1, 1), (1, 1), Parity.ODD)
        theta = GrassmannElement.generator(n, 1)
        theta_I = GradedMatrix.identity(n, (1, 1)).scale_left(theta)
        lhs = A @ theta_I
        rhs = theta_I @ A
        assert lhs.distance(rhs.scale_left(-1.0)) == 0.0

    def test_expm_identity_and_inverse(self, rng):
        n = 2
        I = GradedMatrix.identity(n, (1, 1))
        assert graded_expm(GradedMatrix.zeros(n, (1, 1), (1, 1))).distance(I) == 0.0
        M = GradedMatrix.from_real(n, np.diag([0.4, -0.7]), (1, 1), (1, 1), Parity.EVEN)
        odd = GradedMatrix.from_real(n, np.array([[0.0, 0.8], [0.3, 0.0]]), (1, 1), (1, 1), Parity.ODD)
        M = M + odd.scale_left(GrassmannElement.generator(n, 1))
        E = graded_expm(M)
        assert (E @ graded_expm(-M)).distance(I) < 1e-12

    def test_expm_two_term_nilpotent(self):
        # exp(e12 * K) with K^2 = 0 is I + e12 K
        n = 2
        K = np.array([[0.0, 1.0], [0.0, 0.0]])
        e12 = GrassmannElement.monomial(n, (1, 2))
        M = GradedMatrix.from_real(n, K, (2, 0), (2, 0), Parity.EVEN).scale_left(e12)
        E = graded_expm(M)
        expect = GradedMatrix.identity(n, (2, 0)) + M
        assert E.distance(expect) < 1e-15

    def test_expm_against_flattened_oracle(self, rng):
        n = 2
        body = np.diag(rng.uniform(-0.4, 0.4, 2))
        M = GradedMatrix.from_real(n, body, (1, 1), (1, 1), Parity.EVEN)
        odd = np.zeros((2, 2))
        odd[0, 1], odd[1, 0] = rng.uniform(-0.5, 0.5, 2)
        M = M + GradedMatrix.from_real(n, odd, (1, 1), (1, 1), Parity.ODD).scale_left(
            GrassmannElement.generator(n, 1))
        got = graded_expm(M)
        want = expm_oracle(n, M.comps, (1, 1), (1, 1))
        assert float(np.max(np.abs(got.comps - want))) < 1e-12
        series = expm_series_oracle(n, M.comps, (1, 1), (1, 1), terms=2 * (n + 1))
        assert float(np.max(np.abs(got.comps - series))) < 1e-6

    def test_expm_rejects_odd(self):
        odd = GradedMatrix.from_real(2, np.array([[0.0, 1.0], [1.0, 0.0]]), (1, 1), (1, 1), Parity.ODD)
        with pytest.raises(ParityError):
            graded_expm(odd)

    def test_matrix_json_round_trip(self, rng):
        n = 2
        comps = rng.uniform(-1, 1, (4, 2, 2))
        m = GradedMatrix(n, comps, (1, 1), (1, 1), None, check=False)
        back = GradedMatrix.from_json_dict(m.to_json_dict())
        assert back.distance(m) == 0.0
        assert np.array_equal(back.comps, m.comps)


class TestAlgebraMap:
    def test_generator_images(self):
        n_from, n_to = 2, 3
        e = [GrassmannElement.generator(n_to, i) for i in (1, 2, 3)]
        hom = AlgebraMap(n_from, n_to, [e[0] + e[2], e[1]])
        u = GrassmannElement.monomial(n_from, (1, 2), 2.0)
        img = hom.apply(u)
        # 2 (e1 + e3) e2 = 2 e12 - 2 e23
        assert img.terms() == {(1, 2): 2.0, (2, 3): -2.0}

    def test_even_image_rejected(self):
        with pytest.raises(ParityError):
            AlgebraMap(1, 2, [GrassmannElement.one(2)])

    def test_homomorphism_property(self, rng):
        n = 3
        imgs = [GrassmannElement.generator(n, 1) * 0.5 + GrassmannElement.generator(n, 3),
                GrassmannElement.generator(n, 2),
                GrassmannElement.monomial(n, (1, 2, 3), 0.25)]
        hom = AlgebraMap(3, 3, imgs)
        u = GrassmannElement(3, rng.uniform(-1, 1, 8))
        v = GrassmannElement(3, rng.uniform(-1, 1, 8))
        assert hom.apply(u * v).allclose(hom.apply(u) * hom.apply(v), 1e-14)
