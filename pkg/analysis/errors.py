"""
Error norms of a discrete space-time solution against a manufactured one.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterator, Tuple

import numpy as np

from core.fespace import SlabSolution, SolutionField
from core.forms import TransportData, assemble_J
from core.quadrature import QuadratureConfig, RuleBatch, SlabQuadrature


@dataclass
class ErrorReport:
    l2_final: float
    h1_st: float
    matderiv: float
    l2_spacetime: float
    components: Dict[str, float] = field(default_factory=dict)
    mass_balance: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)


def slab_quadrature(slab: SlabSolution) -> SlabQuadrature:
    if slab.quadrature is None:
        space = slab.space
        slab.quadrature = SlabQuadrature(space.geometry, QuadratureConfig.for_orders(space.k_s, space.k_t))
    return slab.quadrature


def _volume(field_: SolutionField) -> Iterator[Tuple[SlabSolution, RuleBatch, np.ndarray]]:
    for slab in field_.slabs:
        for batch in slab_quadrature(slab).volume_batches():
            yield slab, batch, batch.points(slab.space.mesh)


def _components(pair, shape):
    return np.stack([np.broadcast_to(pair[0], shape), np.broadcast_to(pair[1], shape)], axis=-1)


def l2_final_error(field_: SolutionField, u: Callable) -> float:
    """||u(T) - u_h(T^-)|| on the discrete domain at the final time."""
    slab = field_.slabs[-1]
    total = 0.0
    for batch in slab_quadrature(slab).end:
        x = batch.points(slab.space.mesh)
        diff = u(x[..., 0], x[..., 1], batch.t) - slab.evaluate_batch(batch)
        total += float(np.sum(batch.weights * diff ** 2))
    return math.sqrt(total)


def l2_spacetime_error(field_: SolutionField, u: Callable) -> float:
    total = 0.0
    for slab, batch, x in _volume(field_):
        diff = u(x[..., 0], x[..., 1], batch.t) - slab.evaluate_batch(batch)
        total += batch.time_weight * float(np.sum(batch.weights * diff ** 2))
    return math.sqrt(total)


def h1_spacetime_error(field_: SolutionField, grad_u: Callable, dt_u: Callable) -> float:
    """(int_Q |grad(u - u_h)|^2 + (d_t(u - u_h))^2)^{1/2}, slab-wise one-sided derivatives."""
    total = 0.0
    for slab, batch, x in _volume(field_):
        g = _components(grad_u(x[..., 0], x[..., 1], batch.t), x.shape[:-1])
        dg = g - slab.evaluate_batch(batch, "grad_x")
        dtd = dt_u(x[..., 0], x[..., 1], batch.t) - slab.evaluate_batch(batch, "dt")
        total += batch.time_weight * float(np.sum(batch.weights * (np.sum(dg ** 2, axis=-1) + dtd ** 2)))
    return math.sqrt(total)


def material_derivative_error(field_: SolutionField, w: Callable, grad_u: Callable, dt_u: Callable) -> float:
    """||(d_t + w . grad)(u - u_h)|| over the discrete space-time domain."""
    total = 0.0
    for slab, batch, x in _volume(field_):
        vel = _components(w(x[..., 0], x[..., 1], batch.t), x.shape[:-1])
        g = _components(grad_u(x[..., 0], x[..., 1], batch.t), x.shape[:-1])
        exact = dt_u(x[..., 0], x[..., 1], batch.t) + np.sum(vel * g, axis=-1)
        discrete = slab.evaluate_batch(batch, "dt") + np.sum(vel * slab.evaluate_batch(batch, "grad_x"), axis=-1)
        total += batch.time_weight * float(np.sum(batch.weights * (exact - discrete) ** 2))
    return math.sqrt(total)


def jump_terms(field_: SolutionField, u: Callable) -> Dict[str, float]:
    """Squared temporal jumps of the error: interior slab boundaries, initial and final traces."""
    slabs = field_.slabs
    interior = 0.0
    for prev, nxt in zip(slabs[:-1], slabs[1:]):
        for batch in slab_quadrature(nxt).start:
            jump = nxt.evaluate_batch(batch) - prev.evaluate(batch.elements, batch.xi, 1.0)
            interior += float(np.sum(batch.weights * jump ** 2))

    first = slabs[0]
    initial = 0.0
    for batch in slab_quadrature(first).start:
        x = batch.points(first.space.mesh)
        initial += float(np.sum(batch.weights * (u(x[..., 0], x[..., 1], batch.t) - first.evaluate_batch(batch)) ** 2))
    return {
        "jumps_interior": interior,
        "jump_initial": initial,
        "jump_final": l2_final_error(field_, u) ** 2,
    }


def ghost_energy(field_: SolutionField, gamma_j: float, j_scaling: int = -1) -> float:
    """J(u_h, u_h) summed over all slabs."""
    total = 0.0
    for slab in field_.slabs:
        c = slab.coefficients
        total += float(c @ (assemble_J(slab.space, gamma_j, j_scaling) @ c))
    return total


def mass_balance(field_: SolutionField, data: TransportData) -> Dict[str, float]:
    """
    int_{Omega^h(T)} u_h(T^-) against int_{Omega^h(0)} u0 + int_{Q^h} f.
    The defect is zero up to solver tolerance for the mass-conserving form.
    """
    last = field_.slabs[-1]
    final = sum(float(np.sum(b.weights * last.evaluate_batch(b))) for b in slab_quadrature(last).end)
    first = field_.slabs[0]
    mesh = first.space.mesh
    initial = sum(float(np.sum(b.weights * data.initial(b.points(mesh)))) for b in slab_quadrature(first).start)
    source = 0.0
    for slab in field_.slabs:
        for batch in slab_quadrature(slab).form_batches():
            f = data.source(batch.points(mesh), batch.point_times())
            source += float(np.sum(batch.element_time_weights()[:, None] * batch.weights * f))
    defect = final - initial - source
    scale = max(abs(final), abs(initial), abs(source), np.finfo(float).tiny)
    return {"final": final, "initial": initial, "source": source, "defect": defect,
            "relative_defect": abs(defect) / scale}


def compute_error_report(field_: SolutionField, case, gamma_j: float, j_scaling: int = -1) -> ErrorReport:
    """All norms reported per refinement level."""
    data = case.transport_data()
    l2_st = l2_spacetime_error(field_, case.u)
    matderiv = material_derivative_error(field_, case.w, case.grad_u, case.dt_u)
    h = field_.mesh.h_max
    components = {
        "h_matderiv_sq": h * matderiv ** 2,
        "l2_spacetime_sq": l2_st ** 2,
        "ghost_energy": ghost_energy(field_, gamma_j, j_scaling),
    }
    components.update(jump_terms(field_, case.u))
    return ErrorReport(
        l2_final=l2_final_error(field_, case.u),
        h1_st=h1_spacetime_error(field_, case.grad_u, case.dt_u),
        matderiv=matderiv,
        l2_spacetime=l2_st,
        components=components,
        mass_balance=mass_balance(field_, data),
    )


def eoc(errors) -> list:
    """log2 of successive error quotients; the first entry is NaN."""
    out = [float("nan")]
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if coarse > 0 and fine > 0:
            out.append(math.log2(coarse / fine))
        else:
            out.append(float("nan"))
    return out
