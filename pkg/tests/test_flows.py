"""Integration of even and odd vector fields."""

import numpy as np
import pytest

from supertransport.errors import DomainError, ParityError, ResolutionError
from supertransport.flows import flow_even, flow_odd, flow_odd_residual
from supertransport.geometry import GrassmannPoly, SuperVectorField
from supertransport.grassmann import GrassmannElement, Parity, PolyMap
from supertransport.superfield import SuperPoint

from reference import flow_oracle

G = GrassmannElement


def d_analog_field():
    """zeta d/dx + d/dzeta on R^{1|1}."""
    a_x = GrassmannPoly(1, 1, {(0,): PolyMap.constant(1, 1.0)})
    a_z = GrassmannPoly(1, 1, {(): PolyMap.constant(1, 1.0)})
    return SuperVectorField(1, 1, Parity.ODD, [a_x, a_z])


def generic_odd_field(g_coeffs):
    """zeta g(x) d/dx + d/dzeta."""
    a_x = GrassmannPoly(1, 1, {(0,): PolyMap(1, g_coeffs)})
    a_z = GrassmannPoly(1, 1, {(): PolyMap.constant(1, 1.0)})
    return SuperVectorField(1, 1, Parity.ODD, [a_x, a_z])


class TestFlowEven:
    def test_translation_field(self):
        X = SuperVectorField(1, 0, Parity.EVEN, [GrassmannPoly.constant(1, 0, 1.0)])
        tr = flow_even(X, [G.scalar(3, 0.25)], 1.0, 16)
        assert abs(tr.final()[0].body - 1.25) < 1e-14

    def test_linear_field_exponential(self):
        X = SuperVectorField(1, 0, Parity.EVEN,
                             [GrassmannPoly.from_even(1, 0, PolyMap(1, {(1,): 1.0}))])
        tr = flow_even(X, [G.one(3)], 1.0, 1000)
        assert abs(tr.final()[0].body - np.e) < 1e-8

    def test_nilpotent_constant_field(self):
        lam = G.monomial(3, (1, 2))
        X = SuperVectorField(1, 0, Parity.EVEN, [GrassmannPoly.lambda_constant(1, 0, lam)])
        tr = flow_even(X, [G.scalar(3, 2.0)], 1.0, 16)
        assert tr.final()[0] == G.from_terms(3, {(): 2.0, (1, 2): 1.0})

    def test_semigroup_property(self, rng):
        X = SuperVectorField(1, 1, Parity.EVEN, [
            GrassmannPoly(1, 1, {(): PolyMap(1, {(0,): 0.2, (1,): 0.5})}),
            GrassmannPoly(1, 1, {(0,): PolyMap(1, {(1,): -0.4})}),
        ])
        n = 3
        init = [G.from_terms(n, {(): 0.5, (1, 2): 0.2}), G.generator(n, 1) * 0.6]
        whole = flow_even(X, init, 1.0, 512).final()
        half = flow_even(X, init, 0.5, 256).final()
        rest = flow_even(X, half, 0.5, 256).final()
        for u, v in zip(whole, rest):
            assert u.allclose(v, 1e-9)

    def test_step_count_guard(self):
        X = SuperVectorField(1, 0, Parity.EVEN, [GrassmannPoly.constant(1, 0, 1.0)])
        with pytest.raises(ResolutionError):
            flow_even(X, [G.scalar(2, 0.0)], 1.0, 1)

    def test_parity_guards(self):
        X = d_analog_field()
        with pytest.raises(ParityError):
            flow_even(X, [G.scalar(2, 0.0), G.generator(2, 1)], 1.0, 16)
        Y = SuperVectorField(1, 0, Parity.EVEN, [GrassmannPoly.constant(1, 0, 1.0)])
        with pytest.raises(ParityError):
            flow_even(Y, [G.generator(2, 1)], 1.0, 16)

    def test_blow_up_raises(self):
        X = SuperVectorField(1, 0, Parity.EVEN,
                             [GrassmannPoly.from_even(1, 0, PolyMap(1, {(2,): 1.0}))])
        with pytest.raises(DomainError):
            flow_even(X, [G.scalar(2, 2.0)], 5.0, 2000)

    def test_csv_dump(self, tmp_path):
        X = SuperVectorField(1, 0, Parity.EVEN, [GrassmannPoly.constant(1, 0, 1.0)])
        tr = flow_even(X, [G.scalar(2, 0.0)], 1.0, 8)
        out = tmp_path / "traj.csv"
        tr.to_csv(str(out))
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("t,x1[]")
        assert len(lines) == 10

    def test_against_component_oracle(self, rng):
        # Grassmann-arithmetic integration vs the expanded real system
        X = SuperVectorField(2, 1, Parity.EVEN, [
            GrassmannPoly(2, 1, {(): PolyMap(2, {(0, 0): 0.3, (1, 0): 0.4, (0, 1): -0.2})}),
            GrassmannPoly(2, 1, {(): PolyMap(2, {(0, 0): -0.1, (0, 1): 0.5})}),
            GrassmannPoly(2, 1, {(0,): PolyMap(2, {(1, 0): 0.7})}),
        ])
        n = 3
        init = [G.from_terms(n, {(): 0.5, (1, 2): 0.2}),
                G.from_terms(n, {(): -0.3, (2, 3): -0.4}),
                G.generator(n, 1) * 0.8]
        tr = flow_even(X, init, 1.0, 400)
        got = np.stack([v.comps for v in tr.final()])
        want = flow_oracle(X, np.stack([v.comps for v in init]), 1.0, n)
        assert float(np.max(np.abs(got - want))) < 1e-9


class TestFlowOdd:
    def test_shift_field(self):
        # X = d/dzeta: alpha(t, theta, (x0, z0)) = (x0, z0 + theta)
        a_x = GrassmannPoly(1, 1, {(0,): PolyMap.constant(1, 0.0)})
        a_z = GrassmannPoly(1, 1, {(): PolyMap.constant(1, 1.0)})
        X = SuperVectorField(1, 1, Parity.ODD, [a_x, a_z])
        n = 2
        x0, z0 = G.scalar(n, 0.4), G.generator(n, 1) * 0.5
        end = SuperPoint(G.scalar(n, 1.0), G.generator(n, 2))
        out = flow_odd(X, [x0, z0], end, 64)
        assert out[0] == x0
        assert out[1] == z0 + end.theta

    def test_analog_flow_is_left_translation(self):
        X = d_analog_field()
        n = 3
        x0 = G.scalar(n, 0.5)
        z0 = G.generator(n, 1) * 0.5
        end = SuperPoint(G.scalar(n, 1.0), G.generator(n, 2))
        out = flow_odd(X, [x0, z0], end, 512)
        assert out[0] == end.t + x0 + end.theta * z0
        assert out[1] == end.theta + z0

    def test_defining_equation_residual(self):
        X = generic_odd_field({(0,): 0.3, (1,): 0.7})
        n = 3
        init = [G.scalar(n, 0.5), G.generator(n, 1) * 0.5]
        assert flow_odd_residual(X, init, 1.0, 128) < 1e-7

    def test_restriction_is_flow_of_square(self):
        X = generic_odd_field({(0,): 0.3, (1,): 0.7, (2,): -0.2})
        n = 3
        init = [G.from_terms(n, {(): 0.5, (1, 2): 0.1}), G.generator(n, 1) * 0.5]
        Y = X.squared()
        out0 = flow_odd(X, init, SuperPoint.at(n, 1.0), 256)
        final = flow_even(Y, init, 1.0, 256).final()
        for u, v in zip(out0, final):
            assert u.allclose(v, 1e-9)

    def test_soulful_endpoint(self):
        X = d_analog_field()
        n = 3
        x0, z0 = G.scalar(n, 0.25), G.generator(n, 1) * 0.5
        t = G.scalar(n, 1.0) + G.monomial(n, (1, 2), 0.25)
        end = SuperPoint(t, G.generator(n, 3) * 0.5)
        out = flow_odd(X, [x0, z0], end, 256)
        assert out[0] == end.t + x0 + end.theta * z0
        assert out[1] == end.theta + z0
