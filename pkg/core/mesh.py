"""
Structured simplicial background mesh on an axis-aligned box.

The mesh never moves; the physical domain is carved out of it by the level
set. Elements are stored counter-clockwise, facets are the unique edges in
lexicographic order of their sorted vertex pairs.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from core.exceptions import MeshError

SPLITS = ("diagonal", "criss_cross")


class AffineMap:
    """x = v0 + J xi from the reference triangle (0,0),(1,0),(0,1)."""

    def __init__(self, v0: np.ndarray, jac: np.ndarray):
        self.v0 = np.asarray(v0, dtype=float)
        self.jac = np.asarray(jac, dtype=float)
        self.det = float(np.linalg.det(self.jac))
        self.inv_jac = np.linalg.inv(self.jac)

    def forward(self, xi: np.ndarray) -> np.ndarray:
        return self.v0 + np.asarray(xi, dtype=float) @ self.jac.T

    def inverse(self, x: np.ndarray) -> np.ndarray:
        # affine, so this is defined on the whole plane
        return (np.asarray(x, dtype=float) - self.v0) @ self.inv_jac.T


class Mesh:
    def __init__(self, vertices: np.ndarray, elements: np.ndarray, box: Tuple[float, float, float, float],
                 split: str = "criss_cross"):
        """
        Immutable triangulation with element geometry and facet connectivity.

        Args:
            vertices (np.ndarray): (n_vertices, 2) coordinates
            elements (np.ndarray): (n_elements, 3) vertex indices, any orientation
            box (tuple): (x0, x1, y0, y1) of the background domain
            split (str): how grid cells were split, kept for reporting
        """
        self.box = tuple(float(b) for b in box)
        self.split = split
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        elements = np.array(elements, dtype=np.int64)

        v0 = self.vertices[elements[:, 0]]
        e1 = self.vertices[elements[:, 1]] - v0
        e2 = self.vertices[elements[:, 2]] - v0
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        flip = det < 0
        elements[flip, 1], elements[flip, 2] = elements[flip, 2], elements[flip, 1].copy()
        self.elements = elements
        self.elements.setflags(write=False)

        self.v0 = self.vertices[elements[:, 0]]
        jac = np.empty((len(elements), 2, 2))
        jac[:, :, 0] = self.vertices[elements[:, 1]] - self.v0
        jac[:, :, 1] = self.vertices[elements[:, 2]] - self.v0
        self.jac = jac
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(self.det <= 0.0):
            raise MeshError("degenerate element with non-positive area")
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        self.inv_jac = inv / self.det[:, None, None]
        self.areas = 0.5 * self.det

        edges = np.concatenate([elements[:, [1, 2]], elements[:, [2, 0]], elements[:, [0, 1]]])
        lengths = np.linalg.norm(self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]], axis=1)
        self.h_max = float(lengths.max())

        self._build_facets()
        self._tree: Optional[cKDTree] = None
        self.cells: Optional[Tuple[int, int]] = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_interior_facets(self) -> int:
        return len(self.interior_facets)

    def _build_facets(self):
        n_el = self.n_elements
        local = np.concatenate([self.elements[:, [1, 2]], self.elements[:, [2, 0]], self.elements[:, [0, 1]]])
        owner = np.tile(np.arange(n_el), 3)
        keys = np.sort(local, axis=1)
        facets, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold facet shared by more than two elements")

        order = np.lexsort((owner, inverse))
        first = np.full(len(facets), -1, dtype=np.int64)
        second = np.full(len(facets), -1, dtype=np.int64)
        sorted_facets = inverse[order]
        sorted_owner = owner[order]
        starts = np.searchsorted(sorted_facets, np.arange(len(facets)))
        first[:] = sorted_owner[starts]
        has_second = counts == 2
        second[has_second] = sorted_owner[starts[has_second] + 1]

        self.facets = facets
        self.facet_elements = np.stack([first, second], axis=1)
        interior = np.flatnonzero(has_second)
        self.interior_facet_ids = interior
        self.interior_facets = facets[interior]
        self.interior_patches = self.facet_elements[interior]
        self.boundary_facet_ids = np.flatnonzero(~has_second)
        self.element_facets = inverse.reshape(3, n_el).T

    def element_map(self, e: int) -> AffineMap:
        return AffineMap(self.v0[e], self.jac[e])

    def facet_patch(self, f: int) -> Tuple[int, int]:
        """Elements (T1, T2) sharing interior facet number f, lower id first."""
        if f < 0 or f >= self.n_interior_facets:
            raise MeshError(f"facet {f} is not an interior facet")
        t1, t2 = self.interior_patches[f]
        return int(t1), int(t2)

    def facet_orientation(self, f: int) -> Tuple[int, int]:
        """
        Direction in which each patch element traverses interior facet f
        (+1 along the sorted vertex pair, -1 against it).
        """
        a, b = self.interior_facets[f]
        signs = []
        for e in self.facet_patch(f):
            tri = list(self.elements[e])
            i = tri.index(a)
            signs.append(1 if tri[(i + 1) % 3] == b else -1)
        return signs[0], signs[1]

    def physical_points(self, elements: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Map reference points xi (E, P, 2) of elements (E,) to physical coordinates."""
        return self.v0[elements][:, None, :] + np.einsum("eij,epj->epi", self.jac[elements], xi)

    def reference_points(self, elements: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Inverse affine map of physical points x (E, P, 2) into the reference frame of elements."""
        return np.einsum("eij,epj->epi", self.inv_jac[elements], x - self.v0[elements][:, None, :])

    def locate_points(self, points: np.ndarray, candidates: int = 8) -> Tuple[np.ndarray, np.ndarray]:
        """
        Find a containing element for each point.

        Returns:
            Tuple[np.ndarray, np.ndarray]: element ids (-1 when outside the box)
            and reference coordinates (n, 2)
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._tree is None:
            centroids = self.vertices[self.elements].mean(axis=1)
            self._tree = cKDTree(centroids)
        k = min(candidates, self.n_elements)
        _, near = self._tree.query(points, k=k)
        near = np.asarray(near).reshape(len(points), k)

        found = np.full(len(points), -1, dtype=np.int64)
        xi_found = np.zeros((len(points), 2))
        for j in range(k):
            todo = found < 0
            if not np.any(todo):
                break
            cand = near[todo, j]
            xi = np.einsum("eij,ej->ei", self.inv_jac[cand], points[todo] - self.v0[cand])
            lam0 = 1.0 - xi[:, 0] - xi[:, 1]
            inside = (xi[:, 0] >= -1e-12) & (xi[:, 1] >= -1e-12) & (lam0 >= -1e-12)
            idx = np.flatnonzero(todo)[inside]
            found[idx] = cand[inside]
            xi_found[idx] = xi[inside]
        return found, xi_found


def build_structured_mesh(box: Tuple[float, float, float, float], target_h: float,
                          split: str = "criss_cross") -> Mesh:
    """
    Triangulate an axis-aligned box on a uniform grid.

    Each grid cell is cut into two triangles along its diagonal, or into four
    by its centroid ("criss_cross"). Cell sides never exceed target_h.
    """
    x0, x1, y0, y1 = (float(b) for b in box)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("empty domain")
    if target_h <= 0:
        raise MeshError("empty domain")
    if split not in SPLITS:
        raise MeshError(f"unknown split '{split}', expected one of {SPLITS}")

    nx = max(1, math.ceil((x1 - x0) / target_h - 1e-12))
    ny = max(1, math.ceil((y1 - y0) / target_h - 1e-12))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    vertices = [np.stack([gx.ravel(), gy.ravel()], axis=1)]

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i = i.ravel()
    j = j.ravel()
    a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)

    if split == "diagonal":
        tris = np.stack([np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)], axis=1).reshape(-1, 3)
    else:
        centre = (nx + 1) * (ny + 1) + np.arange(nx * ny)
        cx = 0.5 * (xs[i] + xs[i + 1])
        cy = 0.5 * (ys[j] + ys[j + 1])
        vertices.append(np.stack([cx, cy], axis=1))
        tris = np.stack([
            np.stack([a, b, centre], axis=1),
            np.stack([b, c, centre], axis=1),
            np.stack([c, d, centre], axis=1),
            np.stack([d, a, centre], axis=1),
        ], axis=1).reshape(-1, 3)

    mesh = Mesh(np.concatenate(vertices), tris, (x0, x1, y0, y1), split=split)
    mesh.cells = (nx, ny)
    logging.getLogger(__name__).info(
        f"Built {split} mesh: {nx}x{ny} cells, {mesh.n_elements} elements, "
        f"{mesh.n_interior_facets} interior facets, h_max={mesh.h_max:.4g}"
    )
    return mesh


def element_map(mesh: Mesh, e: int) -> AffineMap:
    return mesh.element_map(e)


def facet_patch(mesh: Mesh, f: int) -> Tuple[int, int]:
    return mesh.facet_patch(f)


def write_off(mesh: Mesh, path: str) -> None:
    """Plain-text dump: header, counts, vertex lines, element lines."""
    lines: List[str] = ["OFF", f"{mesh.n_vertices} {mesh.n_elements} 0"]
    lines.extend(f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices)
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.elements)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
