import numpy as np

from cases.base import CaseDefinition

VELOCITY = (0.5, 0.25)
START = (-0.25, -0.125)


def translating_disk_case(velocity=VELOCITY, start=START) -> CaseDefinition:
    """Unit disk carried by a constant field; u = cos(pi r) sin(pi t / 2) in the moving frame."""
    a, b = velocity
    cx0, cy0 = start

    def offsets(x, y, t):
        return x - (cx0 + a * t), y - (cy0 + b * t)

    def radius(x, y, t):
        dx, dy = offsets(x, y, t)
        return np.sqrt(dx * dx + dy * dy)

    def phi(x, y, t):
        return radius(x, y, t) - 1.0

    def w(x, y, t):
        return np.full(np.shape(x), a), np.full(np.shape(x), b)

    def div_w(x, y, t):
        return np.zeros(np.shape(x))

    def u(x, y, t):
        return np.cos(np.pi * radius(x, y, t)) * np.sin(0.5 * np.pi * t)

    def grad_u(x, y, t):
        dx, dy = offsets(x, y, t)
        factor = -np.pi ** 2 * np.sin(0.5 * np.pi * t) * np.sinc(radius(x, y, t))
        return factor * dx, factor * dy

    def dt_u(x, y, t):
        dx, dy = offsets(x, y, t)
        r = radius(x, y, t)
        transport = np.pi ** 2 * np.sinc(r) * np.sin(0.5 * np.pi * t) * (a * dx + b * dy)
        return transport + 0.5 * np.pi * np.cos(np.pi * r) * np.cos(0.5 * np.pi * t)

    def f(x, y, t):
        return 0.5 * np.pi * np.cos(np.pi * radius(x, y, t)) * np.cos(0.5 * np.pi * t)

    return CaseDefinition(
        name="translating_disk",
        phi=phi,
        w=w,
        div_w=div_w,
        u=u,
        grad_u=grad_u,
        dt_u=dt_u,
        f=f,
        box=(-2.0, 2.0, -2.0, 2.0),
        T=1.0,
        h0=0.5,
        n_slabs0=2,
        description=f"unit disk translated by w = {velocity}",
    )
