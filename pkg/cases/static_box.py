import numpy as np

from cases.base import CaseDefinition


def static_box_case() -> CaseDefinition:
    """Whole unit square inside (phi = -1), no transport: d_t u = f."""

    def phi(x, y, t):
        return np.full(np.shape(x), -1.0)

    def w(x, y, t):
        return np.zeros(np.shape(x)), np.zeros(np.shape(x))

    def div_w(x, y, t):
        return np.zeros(np.shape(x))

    def u(x, y, t):
        return np.sin(np.pi * x) * np.sin(np.pi * y) * (1.0 + t)

    def grad_u(x, y, t):
        return (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y) * (1.0 + t),
                np.pi * np.sin(np.pi * x) * np.cos(np.pi * y) * (1.0 + t))

    def dt_u(x, y, t):
        return np.sin(np.pi * x) * np.sin(np.pi * y) * np.ones_like(np.asarray(t, dtype=float))

    return CaseDefinition(
        name="static_box",
        phi=phi,
        w=w,
        div_w=div_w,
        u=u,
        grad_u=grad_u,
        dt_u=dt_u,
        f=dt_u,
        box=(0.0, 1.0, 0.0, 1.0),
        T=1.0,
        h0=0.25,
        n_slabs0=2,
        description="uncut unit square, fitted reference problem",
    )
