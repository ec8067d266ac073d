import logging
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from core.forms import TransportData


@dataclass
class CaseDefinition:
    """
    Manufactured transport problem. All callables take numpy arrays
    (x, y, t); w returns a pair (wx, wy) and grad_u a pair (ux, uy).
    """
    name: str
    phi: Callable
    w: Callable
    div_w: Callable
    u: Callable
    grad_u: Callable
    dt_u: Callable
    f: Callable
    box: Tuple[float, float, float, float]
    T: float = 1.0
    t0: float = 0.0
    h0: float = 0.9
    n_slabs0: int = 2
    description: str = ""

    def u0(self, x, y):
        return self.u(x, y, self.t0)

    def transport_data(self) -> TransportData:
        return TransportData(w=self.w, div_w=self.div_w, f=self.f, u0=self.u0)

    def schedule(self, level: int) -> Tuple[float, int]:
        """Mesh size and slab count of a refinement level: h0 / 2^i and n_slabs0 * 2^i."""
        return self.h0 * 0.5 ** level, self.n_slabs0 * 2 ** level

    def summary(self) -> Dict:
        return {"name": self.name, "box": list(self.box), "T": self.T, "t0": self.t0,
                "h0": self.h0, "n_slabs0": self.n_slabs0, "description": self.description}


def _random_points(case: CaseDefinition, n_points: int, seed: int):
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = case.box
    x = rng.uniform(x0, x1, n_points)
    y = rng.uniform(y0, y1, n_points)
    t = rng.uniform(case.t0, case.T, n_points)
    return x, y, t


def _components(case: CaseDefinition, x, y, t):
    wx, wy = (np.broadcast_to(c, x.shape) for c in case.w(x, y, t))
    ux, uy = (np.broadcast_to(c, x.shape) for c in case.grad_u(x, y, t))
    return wx, wy, ux, uy


def verify_case(case: CaseDefinition, n_points: int = 1000, seed: int = 0, step: float = 1e-5) -> Dict[str, float]:
    """
    Consistency checks at random space-time points:
    source residual of f against d_t u + w . grad u + div(w) u, and central
    finite differences of u against the closed-form derivatives and of
    d_t u + div(w u) against f.

    Returns:
        Dict[str, float]: maximal absolute deviations
    """
    x, y, t = _random_points(case, n_points, seed)
    wx, wy, ux, uy = _components(case, x, y, t)
    u = case.u(x, y, t)
    div = np.broadcast_to(case.div_w(x, y, t), x.shape)
    residual = case.f(x, y, t) - (case.dt_u(x, y, t) + wx * ux + wy * uy + div * u)

    fd_dt = (case.u(x, y, t + step) - case.u(x, y, t - step)) / (2 * step)
    fd_ux = (case.u(x + step, y, t) - case.u(x - step, y, t)) / (2 * step)
    fd_uy = (case.u(x, y + step, t) - case.u(x, y - step, t)) / (2 * step)

    def flux(xx, yy, tt):
        fx, fy = case.w(xx, yy, tt)
        uu = case.u(xx, yy, tt)
        return fx * uu, fy * uu

    fd_div = ((flux(x + step, y, t)[0] - flux(x - step, y, t)[0])
              + (flux(x, y + step, t)[1] - flux(x, y - step, t)[1])) / (2 * step)
    result = {
        "source_residual": float(np.max(np.abs(residual))),
        "dt_u_fd": float(np.max(np.abs(fd_dt - case.dt_u(x, y, t)))),
        "grad_u_fd": float(max(np.max(np.abs(fd_ux - ux)), np.max(np.abs(fd_uy - uy)))),
        "pde_fd": float(np.max(np.abs(fd_dt + fd_div - case.f(x, y, t)))),
    }
    logging.getLogger(__name__).debug(f"Case {case.name} verification: {result}")
    return result


def material_derivative_fd(case: CaseDefinition, field: Callable, n_points: int = 1000, seed: int = 0,
                           step: float = 1e-5) -> float:
    """Max |d_t g + w . grad g| of a scalar field g(x, y, t) by central differences."""
    x, y, t = _random_points(case, n_points, seed)
    wx, wy = (np.broadcast_to(c, x.shape) for c in case.w(x, y, t))
    gt = (field(x, y, t + step) - field(x, y, t - step)) / (2 * step)
    gx = (field(x + step, y, t) - field(x - step, y, t)) / (2 * step)
    gy = (field(x, y + step, t) - field(x, y - step, t)) / (2 * step)
    return float(np.max(np.abs(gt + wx * gx + wy * gy)))
