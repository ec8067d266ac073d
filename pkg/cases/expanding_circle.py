"""
Disk of radius 1 at the origin expanding with w = beta (x, y) to radius e^beta.

The co-moving radius r = e^{-beta t} |x| is constant along trajectories, so
phi = r - 1 is transported and u = cos(pi r) sin(pi t / 2) vanishes at t = 0.
"""
import numpy as np

from cases.base import CaseDefinition

BETA = 1.0
HALF_WIDTH = 3.5


def expanding_circle_case(beta: float = BETA) -> CaseDefinition:
    def radius(x, y, t):
        return np.exp(-beta * t) * np.sqrt(x * x + y * y)

    def phi(x, y, t):
        return radius(x, y, t) - 1.0

    def w(x, y, t):
        return beta * x, beta * y

    def div_w(x, y, t):
        return np.full(np.shape(x), 2.0 * beta)

    def u(x, y, t):
        return np.cos(np.pi * radius(x, y, t)) * np.sin(0.5 * np.pi * t)

    def grad_u(x, y, t):
        # sin(pi r) / r = pi sinc(r) keeps the origin regular
        factor = -np.pi ** 2 * np.exp(-2.0 * beta * t) * np.sin(0.5 * np.pi * t) * np.sinc(radius(x, y, t))
        return factor * x, factor * y

    def dt_u(x, y, t):
        r = radius(x, y, t)
        return (np.pi * beta * r * np.sin(np.pi * r) * np.sin(0.5 * np.pi * t)
                + 0.5 * np.pi * np.cos(np.pi * r) * np.cos(0.5 * np.pi * t))

    def f(x, y, t):
        r = radius(x, y, t)
        return (0.5 * np.pi * np.cos(np.pi * r) * np.cos(0.5 * np.pi * t)
                + 2.0 * beta * np.cos(np.pi * r) * np.sin(0.5 * np.pi * t))

    return CaseDefinition(
        name="expanding_circle",
        phi=phi,
        w=w,
        div_w=div_w,
        u=u,
        grad_u=grad_u,
        dt_u=dt_u,
        f=f,
        box=(-HALF_WIDTH, HALF_WIDTH, -HALF_WIDTH, HALF_WIDTH),
        T=1.0,
        h0=0.9,
        n_slabs0=2,
        description=f"unit disk expanding with w = {beta}(x, y) to radius e^{beta}",
    )
