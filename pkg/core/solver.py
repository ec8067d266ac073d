import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from core.exceptions import SlabSolveError
from core.fespace import DofMap, SlabSolution, SlabSpace, SolutionField, build_slab_space
from core.forms import TransportData, SlabSystem, assemble_slab_system
from core.levelset import TimePartition, classify_slab, default_sample_times, sample_levelset
from core.mesh import Mesh
from core.quadrature import QuadratureConfig, SlabQuadrature
from utils.stats_tracker import SharedStatsTracker

logger = logging.getLogger(__name__)


@dataclass
class SolveReport:
    slabs: List[Dict] = field(default_factory=list)
    wall_seconds: float = 0.0
    level: Optional[int] = None

    @property
    def ndof_max_slab(self) -> int:
        return max((s["n_unknowns"] for s in self.slabs), default=0)

    @property
    def max_residual(self) -> float:
        return max((s["residual"] for s in self.slabs), default=0.0)

    def to_dict(self) -> Dict:
        return {
            "level": self.level,
            "wall_seconds": self.wall_seconds,
            "ndof_max_slab": self.ndof_max_slab,
            "max_residual": self.max_residual,
            "slabs": self.slabs,
        }


def estimate_condition(matrix: sp.spmatrix, lu=None) -> float:
    """1-norm condition estimate ||A||_1 * est(||A^{-1}||_1)."""
    matrix = sp.csc_matrix(matrix)
    if lu is None:
        lu = spla.splu(matrix)
    n = matrix.shape[0]
    inverse = spla.LinearOperator(
        (n, n),
        matvec=lu.solve,
        rmatvec=lambda x: lu.solve(x, trans="T"),
        dtype=float,
    )
    return float(spla.norm(matrix, 1) * spla.onenormest(inverse))


def solve_slab(system: SlabSystem, tol: float = 1e-10, condition: bool = False) -> Tuple[np.ndarray, Dict]:
    """
    Sparse LU solve with one step of iterative refinement.

    Returns:
        Tuple[np.ndarray, Dict]: solution and statistics (relative residual,
        whether refinement was used, optional condition estimate)
    """
    matrix = sp.csc_matrix(system.matrix)
    rhs = np.asarray(system.rhs, dtype=float)
    if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] != rhs.shape[0]:
        raise ValueError(f"slab {system.slab}: matrix {matrix.shape} does not match rhs {rhs.shape}")

    started = time.perf_counter()
    try:
        lu = spla.splu(matrix)
    except RuntimeError as exc:
        logger.error(f"Factorization failed on slab {system.slab}: {exc}")
        raise SlabSolveError("slab system singular", system.slab, system.level) from exc

    x = lu.solve(rhs)
    b_norm = np.linalg.norm(rhs)
    residual = np.linalg.norm(matrix @ x - rhs)
    refined = False
    if np.isfinite(residual) and residual > tol * b_norm:
        x = x + lu.solve(rhs - matrix @ x)
        residual = np.linalg.norm(matrix @ x - rhs)
        refined = True
        logger.warning(f"Slab {system.slab} needed iterative refinement (residual {residual:.3e})")
    relative = residual / b_norm if b_norm > 0 else residual
    if not np.all(np.isfinite(x)) or not np.isfinite(residual) or residual > tol * b_norm:
        logger.error(f"Slab {system.slab} residual {relative:.3e} above tolerance {tol:.1e}")
        raise SlabSolveError("slab system singular", system.slab, system.level)

    stats = {
        "slab": system.slab,
        "n_unknowns": system.n_unknowns,
        "nnz": int(matrix.nnz),
        "residual": float(relative),
        "refined": refined,
        "solve_seconds": time.perf_counter() - started,
    }
    if condition:
        stats["condition"] = estimate_condition(matrix, lu)
    return x, stats


@dataclass
class SlabProblem:
    """Everything a slab march needs."""
    mesh: Mesh
    partition: TimePartition
    phi: Callable
    data: TransportData
    k_s: int = 2
    k_t: int = 2
    q_t: int = 1
    gamma_j: float = 0.05
    j_scaling: int = -1
    variant: str = "standard"
    quadrature: Optional[QuadratureConfig] = None
    tol: float = 1e-10
    level: Optional[int] = None
    condition: bool = False
    dofmap: Optional[DofMap] = None

    def quadrature_config(self) -> QuadratureConfig:
        if self.quadrature is None:
            return QuadratureConfig.for_orders(self.k_s, self.k_t,
                                               split_crossings=self.variant == "mass_conserving")
        self.quadrature.validate(self.k_s, self.k_t)
        return self.quadrature


def prepare_slab(problem: SlabProblem, dofmap: DofMap, n: int) -> Tuple[SlabSpace, SlabQuadrature]:
    """Level set, classification, space and rules of slab n."""
    qconfig = problem.quadrature_config()
    ls = sample_levelset(problem.phi, problem.mesh, problem.partition, n, problem.q_t)
    geometry = classify_slab(ls, default_sample_times(ls, qconfig.n_time_points))
    space = build_slab_space(problem.mesh, geometry, problem.k_s, problem.k_t, problem.partition, n, dofmap)
    return space, SlabQuadrature(geometry, qconfig)


def march(problem: SlabProblem) -> Tuple[SolutionField, SolveReport]:
    """Solve slab after slab; the left limit of slab n feeds slab n+1."""
    started = time.perf_counter()
    dofmap = problem.dofmap or DofMap(problem.mesh, problem.k_s)
    field_ = SolutionField(problem.partition)
    report = SolveReport(level=problem.level)
    tracker = SharedStatsTracker.get_instance()
    previous: Optional[SlabSolution] = None

    for n in range(1, problem.partition.N + 1):
        space, quadrature = prepare_slab(problem, dofmap, n)
        system = assemble_slab_system(
            space, quadrature, problem.data, problem.gamma_j, problem.j_scaling,
            problem.variant, previous, problem.level,
        )
        coefficients, stats = solve_slab(system, problem.tol, problem.condition)
        previous = SlabSolution(space, coefficients, quadrature)
        field_.append(previous)

        stats.update(space.geometry.summary)
        stats["level"] = problem.level
        report.slabs.append(stats)
        tracker.update_stats(stats)
        logger.info(
            f"Level {problem.level} slab {n}/{problem.partition.N}: {space.n_unknowns} unknowns, "
            f"residual {stats['residual']:.2e}"
        )

    report.wall_seconds = time.perf_counter() - started
    return field_, report
