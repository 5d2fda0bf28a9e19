"""Point-cloud container, exact nearest-neighbor index, sampling, and meshes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Below this source-cloud size a vectorized scan beats tree traversal; both
# paths use the same squared-distance arithmetic and the same first-minimum
# (lowest index) tie rule, so results are bit-identical.
_BRUTE_FORCE_MAX = 64


def _as_points(points, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidInputError(f"points must be a (n, dim) array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidInputError("point cloud must contain at least one point")
    if arr.shape[1] not in (2, 3):
        raise InvalidInputError(f"points must be 2- or 3-dimensional, got dim {arr.shape[1]}")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidInputError(f"expected dim {dim}, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        raise InvalidInputError("points contain NaN or infinite coordinates")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """An ordered, finite set of 2D or 3D points.

    Point order is preserved: the row index is a stable identifier used by
    nearest-neighbor queries, hit counts, and pinning.
    """

    points: np.ndarray

    def __post_init__(self):
        arr = _as_points(self.points)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            (self.points == other.points).all()
        )


def _leaf_min(pts: np.ndarray, q: np.ndarray, indices: np.ndarray) -> tuple[float, int]:
    diff = pts - q
    sq = (diff * diff).sum(axis=1)
    j = int(np.argmin(sq))  # first minimum; indices are sorted, so lowest wins
    return float(sq[j]), int(indices[j])


class NNIndex:
    """Exact nearest-neighbor index over a point cloud.

    Median-split kd-tree with bucket leaves. Immutable after construction and
    safe to query concurrently. Answers are identical to a brute-force scan,
    with distance ties broken toward the lowest point index.
    """

    _LEAF_SIZE = 16

    def __init__(self, cloud: PointCloud):
        self.source = cloud
        pts = cloud.points
        n, dim = pts.shape
        self._pts = pts
        self._dim = dim
        # flat node storage: axis[i] == -1 marks a leaf owning perm[lo[i]:hi[i]]
        self._axis: list[int] = []
        self._threshold: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._lo: list[int] = []
        self._hi: list[int] = []
        self._perm = np.empty(n, dtype=np.intp)
        self._fill = 0
        self._root = self._build(np.arange(n, dtype=np.intp), 0)

    def _new_node(self) -> int:
        self._axis.append(-1)
        self._threshold.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._lo.append(0)
        self._hi.append(0)
        return len(self._axis) - 1

    def _build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        if len(idx) <= self._LEAF_SIZE:
            # sorted leaves make the in-leaf argmin pick the lowest index on ties
            idx = np.sort(idx)
            lo = self._fill
            self._perm[lo : lo + len(idx)] = idx
            self._fill = lo + len(idx)
            self._lo[node] = lo
            self._hi[node] = self._fill
            return node
        axis = depth % self._dim
        mid = len(idx) // 2
        order = np.argpartition(self._pts[idx, axis], mid)
        idx = idx[order]
        self._axis[node] = axis
        self._threshold[node] = float(self._pts[idx[mid], axis])
        self._left[node] = self._build(idx[:mid], depth + 1)
        self._right[node] = self._build(idx[mid:], depth + 1)
        return node

    def query(self, q) -> tuple[int, float]:
        """Return (index, Euclidean distance) of the nearest source point to q."""
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self._dim:
            raise InvalidInputError(
                f"query has dim {q.shape[0]}, index holds dim {self._dim} points"
            )
        if not np.isfinite(q).all():
            raise InvalidInputError("query contains NaN or infinite coordinates")
        best_sq, best_idx = self._search(self._root, q, np.inf, -1)
        return best_idx, float(np.sqrt(best_sq))

    def _search(self, node: int, q: np.ndarray, best_sq: float, best_idx: int):
        axis = self._axis[node]
        if axis < 0:
            lo, hi = self._lo[node], self._hi[node]
            ids = self._perm[lo:hi]
            sq, idx = _leaf_min(self._pts[ids], q, ids)
            if sq < best_sq or (sq == best_sq and idx < best_idx):
                return sq, idx
            return best_sq, best_idx
        delta = q[axis] - self._threshold[node]
        if delta < 0.0:
            near, far = self._left[node], self._right[node]
        else:
            near, far = self._right[node], self._left[node]
        best_sq, best_idx = self._search(near, q, best_sq, best_idx)
        # equal plane distance can still hide an equal-distance, lower-index point
        if delta * delta <= best_sq:
            best_sq, best_idx = self._search(far, q, best_sq, best_idx)
        return best_sq, best_idx

    def query_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized query; returns (indices, distances) arrays."""
        queries = np.asarray(queries, dtype=np.float64)
        if queries.ndim != 2 or queries.shape[1] != self._dim:
            raise InvalidInputError(
                f"queries must have shape (m, {self._dim}), got {queries.shape}"
            )
        n = queries.shape[0]
        indices = np.empty(n, dtype=np.intp)
        dists = np.empty(n, dtype=np.float64)
        for i in range(n):
            sq, idx = self._search(self._root, queries[i], np.inf, -1)
            indices[i] = idx
            dists[i] = np.sqrt(sq)
        return indices, dists


def build_index(cloud: PointCloud) -> NNIndex:
    """Build an exact nearest-neighbor index over a cloud."""
    if len(cloud) < 1:
        raise InvalidInputError("cannot index an empty cloud")
    return NNIndex(cloud)


def nearest(index: NNIndex, q) -> tuple[int, float]:
    """Exact nearest neighbor of q among the indexed points."""
    return index.query(q)


def _nearest_brute(sources: np.ndarray, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # chunked so that 8k x 8k inputs stay within a modest memory budget
    m = queries.shape[0]
    indices = np.empty(m, dtype=np.intp)
    dists = np.empty(m, dtype=np.float64)
    chunk = max(1, int(4_000_000 // max(1, sources.shape[0])))
    for s in range(0, m, chunk):
        e = min(m, s + chunk)
        diff = queries[s:e, None, :] - sources[None, :, :]
        sq = (diff * diff).sum(axis=2)
        idx = np.argmin(sq, axis=1)  # first minimum = lowest index
        indices[s:e] = idx
        dists[s:e] = np.sqrt(sq[np.arange(e - s), idx])
    return indices, dists


def nearest_neighbors(
    queries: np.ndarray, target: PointCloud, index: NNIndex | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest target point for every query row: (indices, distances).

    Uses a vectorized scan for small targets and a kd-tree otherwise; the two
    paths agree bit-for-bit, including the lowest-index tie rule.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != target.dim:
        raise InvalidInputError(
            f"queries must have shape (m, {target.dim}), got {queries.shape}"
        )
    if index is not None:
        return index.query_many(queries)
    if len(target) <= _BRUTE_FORCE_MAX:
        return _nearest_brute(target.points, queries)
    return build_index(target).query_many(queries)


def nearest_hit_counts(queries: PointCloud, index: NNIndex) -> np.ndarray:
    """How many query points select each indexed point as their nearest neighbor."""
    if queries.dim != index.source.dim:
        raise InvalidInputError(
            f"queries have dim {queries.dim}, index holds dim {index.source.dim} points"
        )
    idx, _ = index.query_many(queries.points)
    return np.bincount(idx, minlength=len(index.source))


def subsample(cloud: PointCloud, n: int, method: str = "random", seed: int = 0) -> PointCloud:
    """Draw n points from a cloud, deterministically for a fixed seed.

    ``random`` samples without replacement; ``farthest-point`` greedily
    maximizes the minimum distance to already-selected points, starting from
    the lowest-index point. Selected points are returned in ascending
    original-index order, so n == len(cloud) reproduces the input exactly.
    """
    if not 1 <= n <= len(cloud):
        raise InvalidInputError(f"n must be in [1, {len(cloud)}], got {n}")
    if method == "random":
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(cloud), size=n, replace=False)
    elif method == "farthest-point":
        pts = cloud.points
        chosen = np.empty(n, dtype=np.intp)
        chosen[0] = 0
        min_sq = ((pts - pts[0]) ** 2).sum(axis=1)
        for k in range(1, n):
            nxt = int(np.argmax(min_sq))  # first maximum = lowest index on ties
            chosen[k] = nxt
            cand = ((pts - pts[nxt]) ** 2).sum(axis=1)
            np.minimum(min_sq, cand, out=min_sq)
    else:
        raise InvalidInputError(f"unknown subsample method {method!r}")
    return PointCloud(cloud.points[np.sort(chosen)])


@dataclass(frozen=True)
class TriangleMesh:
    """A 3D triangle mesh; every triangle must have positive area."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64)
        tris = np.asarray(self.triangles, dtype=np.intp)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise InvalidInputError(f"vertices must be (m, 3), got shape {verts.shape}")
        if not np.isfinite(verts).all():
            raise InvalidInputError("vertices contain NaN or infinite coordinates")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise InvalidInputError(f"triangles must be (k, 3), got shape {tris.shape}")
        if tris.shape[0] < 1:
            raise InvalidInputError("mesh must contain at least one triangle")
        if tris.min(initial=0) < 0 or tris.max(initial=-1) >= verts.shape[0]:
            raise InvalidInputError("triangle indices out of vertex range")
        if not _positive_area(verts, tris).all():
            raise InvalidInputError("mesh contains degenerate (zero-area) triangles")
        verts = verts.copy()
        tris = tris.copy()
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    def __len__(self) -> int:
        return self.triangles.shape[0]


def _positive_area(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a = verts[tris[:, 0]]
    e0 = verts[tris[:, 1]] - a
    e1 = verts[tris[:, 2]] - a
    cross = np.cross(e0, e1)
    return np.linalg.norm(cross, axis=1) > 0.0
