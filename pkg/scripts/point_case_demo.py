"""Transport over a point: solver vs the closed-form exponential family.

Solves the parallel equation for a constant odd endomorphism on a rank 1|1
fiber at several endpoints and prints the distance to the closed form
exp(-t A^2 + theta A), plus the h-refinement table showing fourth order.
"""

import numpy as np

from supertransport import (
    Connection,
    DifferentialForm,
    GradedMatrix,
    GrassmannElement,
    Parity,
    SuperPath,
    SuperPoint,
    Superconnection,
    graded_expm,
    sp,
)

N = 2
A0 = np.array([[0.0, 1.0], [1.0, 0.0]])


def closed_form(end):
    A = GradedMatrix.from_real(N, A0, (1, 1), (1, 1), Parity.ODD)
    A2 = GradedMatrix.from_real(N, A0 @ A0, (1, 1), (1, 1), Parity.EVEN)
    return graded_expm(A2.scale_left(-end.t) + A.scale_left(end.theta))


def main():
    sc = Superconnection(
        Connection.zero(0, 0, (1, 1)),
        (DifferentialForm.constant_form(0, 0, (1, 1), Parity.ODD, {(): A0}),))
    path = SuperPath(0, 0, N, [], [], 1.0)
    theta = GrassmannElement.generator(N, 1)

    print("endpoint (t, theta)          solver vs closed form")
    for t in (0.25, 0.5, 1.0):
        end = SuperPoint(GrassmannElement.scalar(N, t), theta)
        tm = sp(path, sc, end, steps=1000)
        print(f"  t={t:<5} theta=e1          {tm.matrix.distance(closed_form(end)):.3e}")

    end = SuperPoint(GrassmannElement.scalar(N, 1.0), theta)
    exact = closed_form(end)
    print("\nsteps   endpoint error    ratio")
    prev = None
    for steps in (5, 10, 20, 40, 80):
        err = sp(path, sc, end, steps=steps).matrix.distance(exact)
        ratio = "" if prev is None else f"{prev / err:6.2f}"
        print(f"{steps:>5}   {err:.6e}    {ratio}")
        prev = err


if __name__ == "__main__":
    main()
