"""
Quadrature on the negative part of straight-cut triangles.

Each cut element is split into at most three sub-triangles along the zero
line of its P1 level set values; the negative ones carry a mapped collapsed
Gauss rule. Rules are produced in batches (one batch for whole elements, one
padded batch for cut elements) so that assembly can be vectorised.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import chain
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from core.basis import gauss_legendre_unit
from core.exceptions import GeometryError, QuadratureConfigError
from core.levelset import SNAP_TOLERANCE, SlabGeometry, SlabLevelSet
from core.mesh import Mesh

AREA_DROP_TOLERANCE = 1e-14

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
BARYCENTRIC_IDENTITY = np.eye(3)


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Collapsed Gauss-Legendre rule on the reference triangle, exact for
    polynomials of total degree <= order. Weights sum to 1/2.
    """
    n = max(1, math.ceil((order + 2) / 2))
    u, wu = gauss_legendre_unit(n)
    v, wv = gauss_legendre_unit(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    xi = np.stack([uu.ravel(), ((1.0 - uu) * vv).ravel()], axis=1)
    w = (np.outer(wu, wv) * (1.0 - uu)).ravel()
    xi.setflags(write=False)
    w.setflags(write=False)
    return xi, w


def _split_point(values: np.ndarray, a: int, b: int) -> np.ndarray:
    theta = values[a] / (values[a] - values[b])
    return (1.0 - theta) * BARYCENTRIC_IDENTITY[a] + theta * BARYCENTRIC_IDENTITY[b]


def _area_fraction(tri: np.ndarray) -> float:
    """Area of a barycentric triangle relative to its parent element."""
    p = tri[:, 1:]
    return abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))


def decompose_cut_triangle(vertex_values) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Split a triangle along the zero line of the P1 interpolant of vertex_values.

    Returns:
        Tuple[List[np.ndarray], List[np.ndarray]]: negative and positive
        sub-triangles, each a (3, 3) array of barycentric vertex coordinates.
        Zero values count as negative; sub-triangles below the area
        tolerance are dropped.
    """
    values = np.asarray(vertex_values, dtype=float)
    neg = values <= 0.0
    whole = [BARYCENTRIC_IDENTITY.copy()]
    if neg.all():
        return whole, []
    if not neg.any():
        return [], whole

    lone_negative = neg.sum() == 1
    a = int(np.flatnonzero(neg if lone_negative else ~neg)[0])
    b, c = (a + 1) % 3, (a + 2) % 3
    p_ab = _split_point(values, a, b)
    p_ac = _split_point(values, a, c)
    lone = [np.stack([BARYCENTRIC_IDENTITY[a], p_ab, p_ac])]
    quad = [
        np.stack([p_ab, BARYCENTRIC_IDENTITY[b], BARYCENTRIC_IDENTITY[c]]),
        np.stack([p_ab, BARYCENTRIC_IDENTITY[c], p_ac]),
    ]
    keep = lambda tris: [t for t in tris if _area_fraction(t) >= AREA_DROP_TOLERANCE]
    if lone_negative:
        return keep(lone), keep(quad)
    return keep(quad), keep(lone)


def interface_segment(vertex_values) -> Optional[np.ndarray]:
    """Endpoints (2, 2) in reference coordinates of the zero line inside a cut element."""
    values = np.asarray(vertex_values, dtype=float)
    neg = values <= 0.0
    if neg.all() or not neg.any():
        return None
    a = int(np.flatnonzero(neg if neg.sum() == 1 else ~neg)[0])
    b, c = (a + 1) % 3, (a + 2) % 3
    seg = np.stack([_split_point(values, a, b)[1:], _split_point(values, a, c)[1:]])
    if np.linalg.norm(seg[1] - seg[0]) == 0.0:
        return None
    return seg


def _cut_negative_subtriangles(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorised negative-side split of CUT elements.

    Args:
        values (np.ndarray): (E, 3) vertex values with mixed signs per row

    Returns:
        Tuple[np.ndarray, np.ndarray]: (E, 2, 3, 2) reference vertices of up to
        two negative sub-triangles and their (E, 2) area fractions (zero for
        unused or dropped slots)
    """
    E = len(values)
    neg = values <= 0.0
    n_neg = neg.sum(axis=1)
    lone_negative = n_neg == 1
    a = np.where(lone_negative, np.argmax(neg, axis=1), np.argmin(neg, axis=1))
    b = (a + 1) % 3
    c = (a + 2) % 3
    rows = np.arange(E)
    va, vb, vc = values[rows, a], values[rows, b], values[rows, c]
    ra, rb, rc = REFERENCE_VERTICES[a], REFERENCE_VERTICES[b], REFERENCE_VERTICES[c]
    p_ab = ra + (va / (va - vb))[:, None] * (rb - ra)
    p_ac = ra + (va / (va - vc))[:, None] * (rc - ra)

    tris = np.zeros((E, 2, 3, 2))
    tris[:, 0] = np.where(lone_negative[:, None, None], np.stack([ra, p_ab, p_ac], axis=1),
                          np.stack([p_ab, rb, rc], axis=1))
    tris[:, 1] = np.where(lone_negative[:, None, None], 0.0, np.stack([p_ab, rc, p_ac], axis=1))

    d1 = tris[:, :, 1] - tris[:, :, 0]
    d2 = tris[:, :, 2] - tris[:, :, 0]
    fraction = np.abs(d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])
    fraction[fraction < AREA_DROP_TOLERANCE] = 0.0
    return tris, fraction


@dataclass
class RuleBatch:
    """
    Quadrature points for a group of elements at one time.

    xi holds reference coordinates (E, P, 2); weights (E, P) already include
    the element Jacobian, so they are physical areas. time_weight is the
    temporal weight the batch contributes with (1 for fixed-time rules).
    Batches of split time rules carry one time (and time weight) per element
    instead of a shared scalar.
    """
    elements: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    t: Union[float, np.ndarray]
    s: Union[float, np.ndarray]
    time_weight: Union[float, np.ndarray] = 1.0
    cut: bool = False

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def per_element_time(self) -> bool:
        return np.ndim(self.s) > 0

    def points(self, mesh: Mesh) -> np.ndarray:
        return mesh.physical_points(self.elements, self.xi)

    def point_times(self) -> Union[float, np.ndarray]:
        """Times broadcastable against (E, P) point arrays."""
        return np.asarray(self.t, dtype=float)[:, None] if self.per_element_time else self.t

    def element_times(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.s, dtype=float), (self.size,))

    def element_time_weights(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.time_weight, dtype=float), (self.size,))

    def total_weight(self) -> float:
        return float(self.weights.sum())

    def spacetime_weight(self) -> float:
        return float(np.sum(self.element_time_weights()[:, None] * self.weights))

    def subset(self, keep: np.ndarray) -> "RuleBatch":
        pick = lambda v: v[keep] if np.ndim(v) > 0 else v
        return RuleBatch(self.elements[keep], self.xi[keep], self.weights[keep], pick(self.t), pick(self.s),
                         pick(self.time_weight), self.cut)


def full_batch(mesh: Mesh, elements: np.ndarray, order: int, t, s, time_weight=1.0) -> RuleBatch:
    xi_ref, w_ref = triangle_rule(order)
    elements = np.asarray(elements, dtype=np.int64)
    xi = np.broadcast_to(xi_ref, (len(elements),) + xi_ref.shape).copy()
    weights = np.outer(mesh.det[elements], w_ref)
    return RuleBatch(elements, xi, weights, t, s, time_weight, cut=False)


def cut_batch(mesh: Mesh, elements: np.ndarray, values: np.ndarray, order: int, t, s,
              time_weight=1.0) -> RuleBatch:
    """Rule on the negative part of CUT elements; values are their (E, 3) vertex values."""
    xi_ref, w_ref = triangle_rule(order)
    P = len(w_ref)
    tris, fraction = _cut_negative_subtriangles(values)
    origin = tris[:, :, 0]
    jac = np.stack([tris[:, :, 1] - origin, tris[:, :, 2] - origin], axis=-1)
    xi = origin[:, :, None, :] + np.einsum("ksij,pj->kspi", jac, xi_ref)
    weights = (fraction[:, :, None] * w_ref[None, None, :]) * mesh.det[elements][:, None, None]
    return RuleBatch(
        np.asarray(elements, dtype=np.int64),
        xi.reshape(len(elements), 2 * P, 2),
        weights.reshape(len(elements), 2 * P),
        t, s, time_weight, cut=True,
    )


def fixed_time_batches(mesh: Mesh, ls: SlabLevelSet, t: float, order: int,
                       candidates: Optional[np.ndarray] = None, time_weight: float = 1.0) -> List[RuleBatch]:
    """Rule batches covering Omega^lin(t) restricted to candidate elements (default all)."""
    s = ls.reference_time(t)
    if t == ls.t_start:
        s = 0.0
    elif t == ls.t_end:
        s = 1.0
    values = ls.element_values(t)
    if candidates is None:
        candidates = np.arange(mesh.n_elements)
    candidates = np.asarray(candidates, dtype=np.int64)
    neg = values[candidates] <= 0.0
    inside = candidates[np.all(neg, axis=1)]
    cut = candidates[np.any(neg, axis=1) & ~np.all(neg, axis=1)]
    batches = []
    if len(inside):
        batches.append(full_batch(mesh, inside, order, t, s, time_weight))
    if len(cut):
        batches.append(cut_batch(mesh, cut, values[cut], order, t, s, time_weight))
    return batches


def interface_batches(mesh: Mesh, ls: SlabLevelSet, t: float, n_points: int,
                      candidates: Optional[np.ndarray] = None, time_weight: float = 1.0) -> List[RuleBatch]:
    """Gauss-Legendre line rules on the zero line of cut elements; weights are lengths."""
    values = ls.element_values(t)
    if candidates is None:
        candidates = np.arange(mesh.n_elements)
    candidates = np.asarray(candidates, dtype=np.int64)
    g, gw = gauss_legendre_unit(n_points)
    elements, xis, weights = [], [], []
    for e in candidates:
        seg = interface_segment(values[e])
        if seg is None:
            continue
        xi = seg[0] + g[:, None] * (seg[1] - seg[0])
        phys = mesh.jac[e] @ (seg[1] - seg[0])
        elements.append(e)
        xis.append(xi)
        weights.append(gw * np.linalg.norm(phys))
    if not elements:
        return []
    s = ls.reference_time(t)
    return [RuleBatch(np.array(elements, dtype=np.int64), np.array(xis), np.array(weights), t, s, time_weight,
                      cut=True)]


def vertex_crossings(ls: SlabLevelSet, vertices: np.ndarray) -> List[np.ndarray]:
    """Sorted reference times in (0, 1) at which phi^lin changes sign at each vertex."""
    values = ls.nodal_values[:, vertices]
    if ls.q_t == 1:
        a, b = values
        change = a * b < 0.0
        s = np.full(len(vertices), np.nan)
        s[change] = a[change] / (a[change] - b[change])
        return [np.array([x]) if change[i] else np.zeros(0) for i, x in enumerate(s)]
    crossings = []
    for column in values.T:
        coefficients = np.polynomial.polynomial.polyfit(ls.basis.nodes, column, ls.q_t)
        roots = np.polynomial.polynomial.polyroots(coefficients)
        real = roots[np.abs(roots.imag) < 1e-12].real
        crossings.append(np.sort(real[(real > 0.0) & (real < 1.0)]))
    return crossings


def element_values_at(ls: SlabLevelSet, elements: np.ndarray, s: np.ndarray) -> np.ndarray:
    """(E, 3) vertex values of phi^lin with element e evaluated at its own reference time s[e]."""
    time_basis = ls.basis.values(np.asarray(s, dtype=float))
    values = np.einsum("eq,qek->ek", time_basis, ls.nodal_values[:, ls.mesh.elements[elements]])
    scale = np.max(np.abs(values), axis=1, keepdims=True)
    values[np.abs(values) < SNAP_TOLERANCE * scale] = 0.0
    return values


def split_time_batches(mesh: Mesh, ls: SlabLevelSet, elements: np.ndarray, breaks: np.ndarray, order: int,
                       n_time_points: int) -> List[RuleBatch]:
    """
    Composite Gauss rules in time for elements whose vertices change sign
    inside the slab. breaks (E, c) holds each element's sorted crossing times;
    every sub-interval between them carries its own n_time_points rule, so
    the cut topology is fixed between consecutive time nodes.
    """
    g, gw = gauss_legendre_unit(n_time_points)
    edges = np.concatenate([np.zeros((len(elements), 1)), breaks, np.ones((len(elements), 1))], axis=1)
    batches = []
    for lo, hi in zip(edges[:, :-1].T, edges[:, 1:].T):
        for node, weight in zip(g, gw):
            s = lo + node * (hi - lo)
            t = ls.t_start + s * ls.dt
            tau = weight * (hi - lo) * ls.dt
            values = element_values_at(ls, elements, s)
            neg = values <= 0.0
            inside = np.all(neg, axis=1)
            cut = np.any(neg, axis=1) & ~inside
            if inside.any():
                batches.append(full_batch(mesh, elements[inside], order, t[inside], s[inside], tau[inside]))
            if cut.any():
                batches.append(cut_batch(mesh, elements[cut], values[cut], order, t[cut], s[cut], tau[cut]))
    return batches


@dataclass
class QuadratureConfig:
    spatial_order: int
    n_time_points: int
    split_crossings: bool = False

    @classmethod
    def for_orders(cls, k_s: int, k_t: int, spatial_order: Optional[int] = None,
                   n_time_points: Optional[int] = None, split_crossings: bool = False) -> "QuadratureConfig":
        config = cls(
            spatial_order=2 * k_s + 2 if spatial_order is None else int(spatial_order),
            n_time_points=k_t + 2 if n_time_points is None else int(n_time_points),
            split_crossings=bool(split_crossings),
        )
        config.validate(k_s, k_t)
        return config

    def validate(self, k_s: int, k_t: int) -> None:
        if self.spatial_order < 2 * k_s:
            raise QuadratureConfigError(
                f"spatial_order={self.spatial_order} cannot integrate P{k_s} products (needs >= {2 * k_s})"
            )
        if self.n_time_points < k_t + 1:
            raise QuadratureConfigError(
                f"n_time_points={self.n_time_points} cannot integrate degree-{k_t} products (needs >= {k_t + 1})"
            )


class SlabQuadrature:
    """
    All rule batches a slab needs: space-time batches at the Gauss times and
    fixed-time batches at both endpoints, restricted to the active elements.

    With split_crossings the bilinear forms and the load integrate elements
    with a vertex sign change inside the slab by per-element composite time
    rules (`split`); `form_volume` then holds the tensor batches of all other
    elements. The error norms always use the tensor batches in `volume`.
    """

    def __init__(self, geometry: SlabGeometry, config: QuadratureConfig):
        ls = geometry.levelset
        mesh = geometry.mesh
        self.geometry = geometry
        self.config = config
        self.dt = ls.dt
        active = geometry.active_elements
        s_q, w_q = gauss_legendre_unit(config.n_time_points)
        self.time_points = s_q
        self.time_weights = w_q * ls.dt
        self.times = ls.t_start + s_q * ls.dt
        self.volume = [
            fixed_time_batches(mesh, ls, float(t), config.spatial_order, active, float(tau))
            for t, tau in zip(self.times, self.time_weights)
        ]
        self.start = fixed_time_batches(mesh, ls, ls.t_start, config.spatial_order, active)
        self.end = fixed_time_batches(mesh, ls, ls.t_end, config.spatial_order, active)

        self.split_elements = np.zeros(0, dtype=np.int64)
        self.split: List[RuleBatch] = []
        self.form_volume = self.volume
        if config.split_crossings:
            self._split_crossing_elements(mesh, ls, active)

    def _split_crossing_elements(self, mesh: Mesh, ls: SlabLevelSet, active: np.ndarray) -> None:
        vertices = np.unique(mesh.elements[active])
        by_vertex = dict(zip(vertices.tolist(), vertex_crossings(ls, vertices)))
        breaks = [np.unique(np.concatenate([by_vertex[v] for v in mesh.elements[e].tolist()])) for e in active]
        counts = np.array([len(b) for b in breaks], dtype=np.int64)
        for c in np.unique(counts[counts > 0]):
            group = np.flatnonzero(counts == c)
            self.split.extend(split_time_batches(mesh, ls, active[group], np.stack([breaks[i] for i in group]),
                                                 self.config.spatial_order, self.config.n_time_points))
        self.split_elements = active[counts > 0]
        if len(self.split_elements) == 0:
            return
        split_mask = np.zeros(mesh.n_elements, dtype=bool)
        split_mask[self.split_elements] = True
        self.form_volume = [
            [kept for kept in (b.subset(~split_mask[b.elements]) for b in batches) if kept.size]
            for batches in self.volume
        ]

    def volume_batches(self) -> Iterator[RuleBatch]:
        for batches in self.volume:
            yield from batches

    def form_batches(self) -> Iterator[RuleBatch]:
        """Batches the slab forms and the load are integrated with."""
        yield from chain(chain.from_iterable(self.form_volume), self.split)

    def spacetime_volume(self) -> float:
        return float(sum(b.spacetime_weight() for b in self.volume_batches()))

    def form_spacetime_volume(self) -> float:
        return float(sum(b.spacetime_weight() for b in self.form_batches()))


@dataclass
class CutRule:
    element: int
    points: np.ndarray
    weights: np.ndarray
    region: str

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _single_element_rule(mesh: Mesh, e: int, batches: List[RuleBatch], with_time: bool) -> CutRule:
    points, weights = [], []
    cut = False
    for b in batches:
        keep = b.weights[0] > 0.0
        x = b.points(mesh)[0][keep]
        if with_time:
            x = np.column_stack([x, np.full(len(x), b.t)])
        points.append(x)
        weights.append(b.weights[0][keep] * b.time_weight)
        cut = cut or b.cut
    dim = 3 if with_time else 2
    pts = np.concatenate(points) if points else np.zeros((0, dim))
    wts = np.concatenate(weights) if weights else np.zeros(0)
    if not batches:
        region = "EMPTY"
    else:
        region = "NEG" if cut else "FULL"
    return CutRule(e, pts, wts, region)


def spatial_cut_rule(mesh: Mesh, e: int, ls: SlabLevelSet, t: float, order: int) -> CutRule:
    """Rule on {phi^lin(., t) < 0} inside element e; empty for positive elements."""
    batches = fixed_time_batches(mesh, ls, t, order, np.array([e]))
    return _single_element_rule(mesh, e, batches, with_time=False)


def spacetime_rule(mesh: Mesh, e: int, ls: SlabLevelSet, spatial_order: int, n_time_points: int) -> CutRule:
    """Tensor rule on the space-time prism of element e cut by phi^lin; points carry (x, y, t)."""
    if n_time_points < 1:
        raise QuadratureConfigError("space-time rule needs at least one time point")
    s_q, w_q = gauss_legendre_unit(n_time_points)
    batches = []
    for s, w in zip(s_q, w_q):
        batches.extend(fixed_time_batches(mesh, ls, ls.t_start + s * ls.dt, spatial_order, np.array([e]),
                                          w * ls.dt))
    return _single_element_rule(mesh, e, batches, with_time=True)


def fixed_time_interface_rule(mesh: Mesh, e: int, ls: SlabLevelSet, t_n: float, order: int) -> CutRule:
    """Spatial rule at a slab endpoint, used for the upwind and initial terms."""
    if t_n != ls.t_start and t_n != ls.t_end:
        raise GeometryError(f"time {t_n} is not an endpoint of slab {ls.n}")
    return spatial_cut_rule(mesh, e, ls, t_n, order)
