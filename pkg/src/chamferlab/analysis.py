"""Closed-form gradient verification for the two-point stalemate scenario,
value/gradient sweeps along the connecting line, and the equal-Chamfer
ambiguity construction (clustered vs uniform prediction)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import ConstructionError, InvalidInputError, MidpointAmbiguityError
from .metrics import chamfer_l1, dcd
from .objective import FcdWeights, fcd, fcd_gradient

_CD_WEIGHTS = FcdWeights(1.0, 1.0)

SWEEP_COLUMNS = (
    "x",
    "cd_l1",
    "fcd_l1",
    "cd_l2",
    "fcd_l2",
    "grad_cd_l1_x",
    "grad_fcd_l1_x",
    "grad_cd_l2_x",
    "grad_fcd_l2_x",
)


def _vec2(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (2,) or not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} must be a finite 2D point")
    return arr


@dataclass(frozen=True)
class SweepConfig:
    """Two fixed targets, one matched point, and abscissae for the free point.

    The free point moves along (x, 0); every abscissa must keep it farther
    from the first target than the matched point is (so the matched pairing
    stays stable), and the midpoint between the targets is excluded because
    the nearest-neighbor assignment is ambiguous there.
    """

    g1: np.ndarray
    g2: np.ndarray
    p1: np.ndarray
    xs: np.ndarray
    weights: FcdWeights

    def __post_init__(self):
        object.__setattr__(self, "g1", _vec2(self.g1, "g1"))
        object.__setattr__(self, "g2", _vec2(self.g2, "g2"))
        object.__setattr__(self, "p1", _vec2(self.p1, "p1"))
        xs = np.asarray(self.xs, dtype=np.float64).reshape(-1)
        if xs.size == 0 or not np.isfinite(xs).all():
            raise InvalidInputError("xs must be a non-empty finite sequence")
        if not (np.diff(xs) > 0).all():
            raise InvalidInputError("xs must be strictly increasing")
        object.__setattr__(self, "xs", xs)
        anchor_dist = np.linalg.norm(self.p1 - self.g1)
        for x in xs:
            p2 = np.array([x, 0.0])
            if np.linalg.norm(p2 - self.g1) <= anchor_dist:
                raise InvalidInputError(
                    f"x={x} violates the validity condition |p2-g1| > |p1-g1|"
                )
            d1 = np.linalg.norm(p2 - self.g1)
            d2 = np.linalg.norm(p2 - self.g2)
            if d1 == d2:
                raise InvalidInputError(f"x={x} lies on the ambiguous midpoint; exclude it")


def default_sweep_config(weights: FcdWeights = FcdWeights(1.0, 2.0)) -> SweepConfig:
    """Canonical sweep: targets (0,0) and (4,0), matched point (0.5,0),
    free point from 0.6 to 3.4 in 0.1 steps with the midpoint 2.0 excluded."""
    xs = np.array([i / 10 for i in range(6, 35) if i != 20])
    return SweepConfig(
        g1=np.array([0.0, 0.0]),
        g2=np.array([4.0, 0.0]),
        p1=np.array([0.5, 0.0]),
        xs=xs,
        weights=weights,
    )


@dataclass(frozen=True)
class ClosedFormGradients:
    """Analytic gradients at the free point for both conventions and orders."""

    cd_l1: np.ndarray
    fcd_l1: np.ndarray
    cd_l2: np.ndarray
    fcd_l2: np.ndarray


def _two_point_gradient(
    p2: np.ndarray, g1: np.ndarray, g2: np.ndarray, weights: FcdWeights, r: int
) -> np.ndarray:
    """Gradient at the free point of the weighted objective on {p1, p2} vs {g1, g2}.

    Valid while p1 stays matched to g1 and g2's nearest prediction is p2: the
    local term pairs p2 with whichever target is closer, the coverage term
    always pulls toward g2.
    """
    d1 = float(np.sqrt(((p2 - g1) ** 2).sum()))
    d2 = float(np.sqrt(((p2 - g2) ** 2).sum()))
    anchor, anchor_dist = (g1, d1) if d1 < d2 else (g2, d2)
    if r == 1:
        local = (weights.alpha / 2.0) * ((p2 - anchor) / anchor_dist)
        coverage = (weights.beta / 2.0) * ((p2 - g2) / d2)
    else:
        local = (weights.alpha / 2.0) * (2.0 * (p2 - anchor))
        coverage = (weights.beta / 2.0) * (2.0 * (p2 - g2))
    return local + coverage


def closed_form_gradients(
    p2, g1, g2, p1, weights: FcdWeights = FcdWeights(1.0, 2.0)
) -> ClosedFormGradients:
    """Analytic stalemate-scenario gradients at the free point p2.

    Requires the configuration the analysis assumes: p2 strictly between the
    two targets, farther from g1 than the matched point p1 is, and not on the
    midpoint (where the local assignment is ambiguous).
    """
    p2 = _vec2(p2, "p2")
    g1 = _vec2(g1, "g1")
    g2 = _vec2(g2, "g2")
    p1 = _vec2(p1, "p1")
    span = g2 - g1
    t = float(np.dot(p2 - g1, span) / np.dot(span, span))
    if not 0.0 < t < 1.0:
        raise InvalidInputError("p2 must lie strictly between g1 and g2")
    if np.linalg.norm(p2 - g1) <= np.linalg.norm(p1 - g1):
        raise InvalidInputError("validity condition |p2-g1| > |p1-g1| violated")
    d1 = np.linalg.norm(p2 - g1)
    d2 = np.linalg.norm(p2 - g2)
    if d1 == d2:
        raise MidpointAmbiguityError("p2 sits on the midpoint; the assignment is ambiguous")
    return ClosedFormGradients(
        cd_l1=_two_point_gradient(p2, g1, g2, _CD_WEIGHTS, 1),
        fcd_l1=_two_point_gradient(p2, g1, g2, weights, 1),
        cd_l2=_two_point_gradient(p2, g1, g2, _CD_WEIGHTS, 2),
        fcd_l2=_two_point_gradient(p2, g1, g2, weights, 2),
    )


@dataclass(frozen=True)
class SweepRow:
    x: float
    cd_l1: float
    fcd_l1: float
    cd_l2: float
    fcd_l2: float
    grad_cd_l1_x: float
    grad_fcd_l1_x: float
    grad_cd_l2_x: float
    grad_fcd_l2_x: float


_CROSS_CHECK_TOL = 1e-12


def sweep(config: SweepConfig) -> list[SweepRow]:
    """Evaluate objective values and free-point gradients along the abscissae.

    Values and gradients come from the full two-point clouds; every gradient
    is cross-checked against the closed forms before a row is emitted.
    """
    rows = []
    g = PointCloud(np.stack([config.g1, config.g2]))
    for x in config.xs:
        p2 = np.array([x, 0.0])
        p = PointCloud(np.stack([config.p1, p2]))
        values = {}
        grads = {}
        for label, weights in (("cd", _CD_WEIGHTS), ("fcd", config.weights)):
            for r in (1, 2):
                values[f"{label}_l{r}"] = fcd(p, g, weights, r)
                grads[f"{label}_l{r}"] = fcd_gradient(p, g, weights, r)[1]
        closed = closed_form_gradients(p2, config.g1, config.g2, config.p1, config.weights)
        for key in ("cd_l1", "fcd_l1", "cd_l2", "fcd_l2"):
            gap = np.abs(grads[key] - getattr(closed, key)).max()
            if gap > _CROSS_CHECK_TOL:
                raise ConstructionError(
                    f"gradient cross-check failed at x={x} for {key}: |delta|={gap:.3e}"
                )
        rows.append(
            SweepRow(
                x=float(x),
                cd_l1=values["cd_l1"],
                fcd_l1=values["fcd_l1"],
                cd_l2=values["cd_l2"],
                fcd_l2=values["fcd_l2"],
                grad_cd_l1_x=float(grads["cd_l1"][0]),
                grad_fcd_l1_x=float(grads["fcd_l1"][0]),
                grad_cd_l2_x=float(grads["cd_l2"][0]),
                grad_fcd_l2_x=float(grads["fcd_l2"][0]),
            )
        )
    return rows


def sweep_to_csv(rows: list[SweepRow], config: SweepConfig) -> str:
    """Render sweep rows as CSV with a comment line recording the setup choices."""
    header = (
        f"# setup: g1=({config.g1[0]},{config.g1[1]}) g2=({config.g2[0]},{config.g2[1]}) "
        f"p1=({config.p1[0]},{config.p1[1]}) weights=({config.weights.alpha},{config.weights.beta}); "
        "free point on (x,0), midpoint excluded; these defaults are this toolkit's choice"
    )
    lines = [header, ",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                repr(float(getattr(row, col))) if col != "x" else repr(row.x)
                for col in SWEEP_COLUMNS
            )
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AmbiguityReport:
    cd_clustered: float
    cd_uniform: float
    dcd_clustered: float
    dcd_uniform: float
    temperature: float
    cluster_offset: float


def _grid_shape(n: int) -> tuple[int, int]:
    rows = 1
    for d in range(2, int(n ** 0.5) + 1):
        if n % d == 0:
            rows = d
    return rows, n // rows


def build_ambiguity_pair(
    n: int, seed: int, temperature: float | None = None
) -> tuple[PointCloud, PointCloud, PointCloud, AmbiguityReport]:
    """Construct two predictions with equal Chamfer distance but different density.

    The target is a planar unit grid of n points. The uniform prediction
    jitters every grid point; the clustered prediction covers only half the
    grid with point pairs, its pair offset bisected until both predictions
    match in Chamfer distance within 1%. The density-aware distance then
    separates them. The report's temperature defaults to 2 / grid pitch so the
    exponential kernel stays sensitive at this construction's scale.
    """
    if n < 8 or n % 2 != 0:
        raise InvalidInputError(f"n must be even and >= 8, got {n}")
    rows, cols = _grid_shape(n)
    ys = np.linspace(0.0, 1.0, rows)
    xs = np.linspace(0.0, 1.0, cols)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    target = PointCloud(grid)
    pitch = min(1.0 / (cols - 1), 1.0 / (rows - 1))
    if temperature is None:
        temperature = 2.0 / pitch

    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-0.45 * pitch, 0.45 * pitch, size=grid.shape)
    uniform = PointCloud(grid + jitter)
    cd_uniform = chamfer_l1(uniform, target)

    # anchors: a checkerboard half of the grid; each carries a pair of points
    ii, jj = np.divmod(np.arange(n), cols)
    anchors = grid[(ii + jj) % 2 == 0]
    dirs = rng.standard_normal((len(anchors), 2, 2))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)

    def clustered(offset: float) -> PointCloud:
        pts = (anchors[:, None, :] + offset * dirs).reshape(-1, 2)
        return PointCloud(pts)

    lo, hi = 0.0, pitch
    f_lo = chamfer_l1(clustered(lo), target) - cd_uniform
    f_hi = chamfer_l1(clustered(hi), target) - cd_uniform
    if f_lo > 0 or f_hi < 0:
        raise ConstructionError(
            "cannot match Chamfer values: clustered construction does not bracket the target"
        )
    offset = 0.5 * (lo + hi)
    for _ in range(200):
        offset = 0.5 * (lo + hi)
        gap = chamfer_l1(clustered(offset), target) - cd_uniform
        if abs(gap) <= 0.005 * cd_uniform:
            break
        if gap < 0:
            lo = offset
        else:
            hi = offset
    else:
        raise ConstructionError("Chamfer matching bisection did not converge in 200 iterations")

    clustered_cloud = clustered(offset)
    report = AmbiguityReport(
        cd_clustered=chamfer_l1(clustered_cloud, target),
        cd_uniform=cd_uniform,
        dcd_clustered=dcd(clustered_cloud, target, temperature),
        dcd_uniform=dcd(uniform, target, temperature),
        temperature=float(temperature),
        cluster_offset=float(offset),
    )
    return clustered_cloud, uniform, target, report
