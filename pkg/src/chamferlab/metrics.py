"""Point-set similarity metrics: Chamfer family, density-aware distance, EMD,
F-score, Hausdorff, point-to-mesh, and fidelity."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .cloud import PointCloud, TriangleMesh, nearest_neighbors
from .errors import InvalidInputError

EMD_EXACT_MAX = 1024


def _check_pair(p: PointCloud, g: PointCloud) -> None:
    if p.dim != g.dim:
        raise InvalidInputError(f"dimension mismatch: {p.dim} vs {g.dim}")


def _check_r(r: int) -> None:
    if r not in (1, 2):
        raise InvalidInputError(f"distance order r must be 1 or 2, got {r}")


def _min_dists(src: PointCloud, dst: PointCloud) -> np.ndarray:
    """Distance from each src point to its nearest dst point."""
    _, dists = nearest_neighbors(src.points, dst)
    return dists


def cd_local(p: PointCloud, g: PointCloud, r: int = 1) -> float:
    """Mean nearest-neighbor distance (order r) from predicted points to the target.

    Measures local precision: each predicted point only needs to sit close to
    some target point.
    """
    _check_pair(p, g)
    _check_r(r)
    d = _min_dists(p, g)
    return float(np.mean(d if r == 1 else d * d))


def cd_global(p: PointCloud, g: PointCloud, r: int = 1) -> float:
    """Mean nearest-neighbor distance (order r) from target points to the prediction.

    Measures coverage: every target point must have a nearby predicted point.
    """
    _check_pair(p, g)
    _check_r(r)
    d = _min_dists(g, p)
    return float(np.mean(d if r == 1 else d * d))


def chamfer_l1(p: PointCloud, g: PointCloud) -> float:
    """Symmetric Chamfer distance with Euclidean terms, halved."""
    return 0.5 * (cd_local(p, g, 1) + cd_global(p, g, 1))


def chamfer_l2(p: PointCloud, g: PointCloud) -> float:
    """Symmetric Chamfer distance with squared-Euclidean terms (no halving)."""
    return cd_local(p, g, 2) + cd_global(p, g, 2)


def dcd(p: PointCloud, g: PointCloud, temperature: float = 1000.0) -> float:
    """Density-aware Chamfer distance, bounded to [0, 1].

    Each nearest-neighbor term is discounted by how many points share the same
    match, so locally over-dense predictions score worse than uniform ones
    with equal plain Chamfer distance. ``temperature`` scales the exponential
    distance kernel.
    """
    _check_pair(p, g)
    if temperature <= 0:
        raise InvalidInputError(f"temperature must be positive, got {temperature}")
    gi, gd = nearest_neighbors(p.points, g)
    pi, pd = nearest_neighbors(g.points, p)
    hits_on_g = np.bincount(gi, minlength=len(g))
    hits_on_p = np.bincount(pi, minlength=len(p))
    term_p = np.mean(1.0 - np.exp(-temperature * gd) / hits_on_g[gi])
    term_g = np.mean(1.0 - np.exp(-temperature * pd) / hits_on_p[pi])
    return float(0.5 * (term_p + term_g))


def emd_exact(p: PointCloud, g: PointCloud, mean: bool = True) -> float:
    """Earth Mover's Distance under the optimal one-to-one assignment.

    Requires equal-size clouds; solves the assignment exactly, so inputs are
    capped at EMD_EXACT_MAX points. Returns the mean matched distance by
    default (``mean=False`` gives the raw sum).
    """
    _check_pair(p, g)
    if len(p) != len(g):
        raise InvalidInputError(f"EMD requires equal sizes, got {len(p)} vs {len(g)}")
    if len(p) > EMD_EXACT_MAX:
        raise InvalidInputError(
            f"exact EMD capped at {EMD_EXACT_MAX} points ({len(p)} given); use emd_approx"
        )
    cost = np.linalg.norm(p.points[:, None, :] - g.points[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    return total / len(p) if mean else total


def emd_approx(
    p: PointCloud, g: PointCloud, iterations: int = 1000, epsilon: float = 0.01
) -> float:
    """Entropic-regularized transport cost approximating the Earth Mover's Distance.

    Log-domain Sinkhorn iterations with uniform marginals; smaller ``epsilon``
    tightens the approximation at the price of slower convergence. The plan is
    rounded to exact marginal feasibility before costing, so the result is an
    upper bound on the exact value and shrinks toward it as iterations grow.
    The value is a mean per unit mass, comparable to ``emd_exact(..., mean=True)``.
    """
    _check_pair(p, g)
    if epsilon <= 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    if iterations < 1:
        raise InvalidInputError(f"iterations must be >= 1, got {iterations}")
    n, m = len(p), len(g)
    cost = np.linalg.norm(p.points[:, None, :] - g.points[None, :, :], axis=2)
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros(n)
    h = np.zeros(m)
    for _ in range(iterations):
        h = -epsilon * logsumexp((f[:, None] - cost) / epsilon + log_a[:, None], axis=0)
        f = -epsilon * logsumexp((h[None, :] - cost) / epsilon + log_b[None, :], axis=1)
    plan = np.exp((f[:, None] + h[None, :] - cost) / epsilon + log_a[:, None] + log_b[None, :])

    # round to a feasible plan: scale rows/columns down to their marginals,
    # then restore missing mass with a rank-one patch
    row = plan.sum(axis=1)
    plan *= np.minimum(a / np.maximum(row, 1e-300), 1.0)[:, None]
    col = plan.sum(axis=0)
    plan *= np.minimum(b / np.maximum(col, 1e-300), 1.0)[None, :]
    err_a = a - plan.sum(axis=1)
    err_b = b - plan.sum(axis=0)
    missing = err_a.sum()
    if missing > 0:
        plan = plan + np.outer(err_a, err_b) / missing
    return float((plan * cost).sum())


def fscore(p: PointCloud, g: PointCloud, threshold: float = 0.01) -> float:
    """Harmonic mean of precision and recall at a distance threshold."""
    _check_pair(p, g)
    if threshold <= 0:
        raise InvalidInputError(f"threshold must be positive, got {threshold}")
    precision = float(np.mean(_min_dists(p, g) <= threshold))
    recall = float(np.mean(_min_dists(g, p) <= threshold))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def hausdorff(p: PointCloud, g: PointCloud) -> float:
    """Maximum nearest-neighbor mismatch over both directions."""
    _check_pair(p, g)
    return float(max(_min_dists(p, g).max(), _min_dists(g, p).max()))


def fidelity(partial_input: PointCloud, output: PointCloud) -> float:
    """Mean distance from each input point to its nearest output point."""
    return cd_local(partial_input, output, 1)


def _point_triangle_sqdists(q: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Exact squared distance from one point to every mesh triangle."""
    verts, tris = mesh.vertices, mesh.triangles
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]

    def seg_sq(s0, s1):
        edge = s1 - s0
        t = np.einsum("ij,ij->i", q - s0, edge) / np.einsum("ij,ij->i", edge, edge)
        t = np.clip(t, 0.0, 1.0)
        delta = q - (s0 + t[:, None] * edge)
        return np.einsum("ij,ij->i", delta, delta)

    sq = np.minimum(seg_sq(a, b), np.minimum(seg_sq(b, c), seg_sq(c, a)))

    # interior of the triangle: barycentric projection onto its plane
    e0, e1 = b - a, c - a
    d00 = np.einsum("ij,ij->i", e0, e0)
    d01 = np.einsum("ij,ij->i", e0, e1)
    d11 = np.einsum("ij,ij->i", e1, e1)
    det = d00 * d11 - d01 * d01
    dp = q - a
    d0p = np.einsum("ij,ij->i", e0, dp)
    d1p = np.einsum("ij,ij->i", e1, dp)
    u = (d11 * d0p - d01 * d1p) / det
    v = (d00 * d1p - d01 * d0p) / det
    inside = (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    proj = a + u[:, None] * e0 + v[:, None] * e1
    delta = q - proj
    plane_sq = np.einsum("ij,ij->i", delta, delta)
    return np.where(inside, np.minimum(sq, plane_sq), sq)


def point_to_mesh(p: PointCloud, mesh: TriangleMesh) -> float:
    """Mean exact distance from each point to the nearest mesh triangle."""
    if p.dim != 3:
        raise InvalidInputError("point-to-mesh distance requires 3D points")
    dists = np.empty(len(p))
    for i, q in enumerate(p.points):
        dists[i] = np.sqrt(_point_triangle_sqdists(q, mesh).min())
    return float(np.mean(dists))


REPORT_COLUMNS = ("cd_l1", "cd_l2", "dcd", "emd", "fscore", "hausdorff", "p2f", "fidelity")


@dataclass
class MetricReport:
    """A flat bundle of metric values; None marks a metric that was not computed."""

    cd_l1: float | None = None
    cd_l2: float | None = None
    dcd: float | None = None
    emd: float | None = None
    fscore: float | None = None
    hausdorff: float | None = None
    p2f: float | None = None
    fidelity: float | None = None

    def __post_init__(self):
        for name in ("dcd", "fscore"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and value < 0.0:
                raise InvalidInputError(f"{f.name} must be non-negative, got {value}")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in REPORT_COLUMNS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def csv_header() -> str:
        return ",".join(REPORT_COLUMNS)

    def csv_row(self) -> str:
        cells = []
        for name in REPORT_COLUMNS:
            value = getattr(self, name)
            cells.append("" if value is None else repr(float(value)))
        return ",".join(cells)
