"""Camera poses, pairwise pose losses, and loss-minimizing view ordering.

Poses are world-to-camera. The pairwise loss between two poses is

    w_geo * arccos((trace(Ra^T Rb) - 1) / 2)  +  w_trans * ||ta - tb||^2

i.e. geodesic rotation distance plus squared translation distance. Ordering
views into a shortest trajectory under that loss is an open-path TSP; small
instances are solved exactly (Held-Karp), larger ones with nearest-neighbor
construction refined by sequential edge exchange.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrajectory, InvalidMatrix, SchemaError

_EPS = 1e-12
_EXACT_LIMIT = 10


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rotation/translation tagged with a view id."""

    rotation: np.ndarray     # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (3,)
    view_id: str = ""

    def __post_init__(self):
        r = np.asarray(self.rotation, np.float64)
        t = np.asarray(self.translation, np.float64)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be length 3, got {t.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
            raise ValueError(f"rotation not orthonormal (view {self.view_id!r})")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError(f"rotation must have det +1 (view {self.view_id!r})")
        r = r.copy(); r.flags.writeable = False
        t = t.copy(); t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


def quat_to_rot(q) -> np.ndarray:
    """Rotation matrix from a Hamilton (w, x, y, z) quaternion; normalizes first."""
    q = np.asarray(q, np.float64)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


# --- pairwise losses ---------------------------------------------------------

def geodesic_loss(a: CameraPose, b: CameraPose) -> float:
    """Rotation angle of Ra^T Rb in radians; symmetric, zero iff equal."""
    t = float(np.trace(a.rotation.T @ b.rotation))
    return float(np.arccos(np.clip((t - 1.0) / 2.0, -1.0, 1.0)))


def translation_loss(a: CameraPose, b: CameraPose) -> float:
    d = a.translation - b.translation
    return float(d @ d)


@dataclass(frozen=True)
class PoseWeights:
    w_geo: float = 1.0
    w_trans: float = 1.0


def normalize_translations(poses) -> list[CameraPose]:
    """Rescale translations to unit RMS magnitude (no-op for all-zero input).

    Makes the translation term comparable across scenes captured at
    different metric scales.
    """
    norms2 = [float(p.translation @ p.translation) for p in poses]
    rms = float(np.sqrt(np.mean(norms2))) if poses else 0.0
    if rms == 0.0:
        return list(poses)
    return [CameraPose(p.rotation, p.translation / rms, p.view_id) for p in poses]


def pose_loss_matrix(poses, weights: PoseWeights | None = None) -> np.ndarray:
    """Symmetric nonnegative (n, n) loss matrix with a zero diagonal.

    Each unordered pair is computed once and mirrored, so symmetry is exact.
    """
    if len(poses) == 0:
        raise EmptyTrajectory("no poses given")
    w = weights or PoseWeights()
    n = len(poses)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            v = w.w_geo * geodesic_loss(poses[i], poses[j]) \
                + w.w_trans * translation_loss(poses[i], poses[j])
            m[i, j] = m[j, i] = v
    return m


# --- trajectory ordering -----------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    order: list[int]
    total_cost: float
    method: str              # "exact" | "nn+lk" | "trivial"
    mode: str                # "open" | "closed"
    view_ids: list[str] | None = None

    def as_dict(self) -> dict:
        return {
            "order": [self.view_ids[i] for i in self.order] if self.view_ids
                     else list(self.order),
            "total_cost": self.total_cost,
            "method": self.method,
            "mode": self.mode,
        }


def _check_matrix(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidMatrix(f"cost matrix must be square, got {m.shape}")
    if m.size == 0:
        raise EmptyTrajectory("empty cost matrix")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("cost matrix contains non-finite entries")
    if m.min() < 0.0:
        raise InvalidMatrix("cost matrix contains negative entries")
    if np.max(np.abs(m - m.T)) > 1e-9:
        raise InvalidMatrix("cost matrix asymmetry exceeds 1e-9")
    return m


def _route_cost(m: np.ndarray, order, closed: bool) -> float:
    c = float(sum(m[order[i], order[i + 1]] for i in range(len(order) - 1)))
    if closed and len(order) > 1:
        c += float(m[order[-1], order[0]])
    return c


def _held_karp_path(m: np.ndarray):
    """Exact minimum Hamiltonian path, free endpoints."""
    n = m.shape[0]
    full = (1 << n) - 1
    dp = np.full((full + 1, n), np.inf)
    par = np.full((full + 1, n), -1, np.int64)
    for j in range(n):
        dp[1 << j, j] = 0.0
    for mask in range(full + 1):
        row = dp[mask]
        for j in range(n):
            cj = row[j]
            if not np.isfinite(cj):
                continue
            for k in range(n):
                if mask & (1 << k):
                    continue
                nm = mask | (1 << k)
                nc = cj + m[j, k]
                if nc < dp[nm, k]:
                    dp[nm, k] = nc
                    par[nm, k] = j
    end = int(np.argmin(dp[full]))
    cost = float(dp[full, end])
    order, mask, j = [], full, end
    while j >= 0:
        order.append(j)
        pj = int(par[mask, j])
        mask &= ~(1 << j)
        j = pj
    order.reverse()
    return order, cost


def _held_karp_tour(m: np.ndarray):
    """Exact minimum closed tour anchored at city 0."""
    n = m.shape[0]
    full = (1 << n) - 1
    dp = np.full((full + 1, n), np.inf)
    par = np.full((full + 1, n), -1, np.int64)
    dp[1, 0] = 0.0
    for mask in range(1, full + 1, 2):  # always contains city 0
        row = dp[mask]
        for j in range(n):
            cj = row[j]
            if not np.isfinite(cj):
                continue
            for k in range(1, n):
                if mask & (1 << k):
                    continue
                nm = mask | (1 << k)
                nc = cj + m[j, k]
                if nc < dp[nm, k]:
                    dp[nm, k] = nc
                    par[nm, k] = j
    closing = dp[full] + m[:, 0]
    end = int(np.argmin(closing))
    cost = float(closing[end])
    order, mask, j = [], full, end
    while j >= 0:
        order.append(j)
        pj = int(par[mask, j])
        mask &= ~(1 << j)
        j = pj
    order.reverse()
    return order, cost


def _nn_tour(m: np.ndarray, start: int = 0) -> list[int]:
    n = m.shape[0]
    visited = np.zeros(n, bool)
    visited[start] = True
    tour = [start]
    for _ in range(n - 1):
        row = np.where(visited, np.inf, m[tour[-1]])
        nxt = int(np.argmin(row))  # ties resolve to the lowest index
        visited[nxt] = True
        tour.append(nxt)
    return tour


def _candidate_lists(m: np.ndarray, k: int) -> list[np.ndarray]:
    n = m.shape[0]
    cand = []
    for i in range(n):
        near = np.argsort(m[i], kind="stable")
        near = near[near != i][:min(k, n - 1)]
        cand.append(near)
    return cand


def _lk_improve(m: np.ndarray, tour: list[int], max_depth: int = 5,
                n_candidates: int = 8) -> list[int]:
    """Sequential edge exchange to a local optimum.

    From each anchor t1 the chain breaks the edge to its successor, adds a
    candidate edge, breaks the implied edge, and either closes (keeping the
    move when the accumulated gain beats the closing cost) or deepens, up to
    max_depth added edges. Moves are realized as segment reversals applied
    tentatively and undone on failure. Candidate lists hold the 8 nearest
    cities; the work queue doubles as don't-look bits. Fully deterministic.
    """
    n = len(tour)
    if n < 4:
        return list(tour)
    order = np.array(tour, np.int64)
    pos = np.empty(n, np.int64)
    pos[order] = np.arange(n)
    cand = _candidate_lists(m, n_candidates)

    def reverse_segment(i: int, j: int):
        ln = (j - i) % n + 1
        idx = np.arange(i, i + ln) % n
        vals = order[idx][::-1]
        order[idx] = vals
        pos[vals] = idx

    def step(t1: int, end: int, gain_in: float, depth: int, dirn: int,
             touched: set) -> bool:
        # Invariant: the tour currently contains edge (t1, end) and, walking
        # in direction dirn from t1, end comes first.
        if gain_in - m[t1, end] > _EPS:
            return True  # already an improvement: keep everything applied
        if depth >= max_depth:
            return False
        for t3 in cand[end]:
            t3 = int(t3)
            d_add = m[end, t3]
            if d_add >= gain_in - _EPS:
                break  # candidates sorted: positive-gain criterion fails from here on
            if t3 == t1 or t3 == end:
                continue
            t4 = int(order[(pos[t3] - dirn) % n])
            if t4 == end:
                continue
            if dirn == 1:
                i, j = int(pos[end]), int(pos[t4])
            else:
                i, j = int(pos[t4]), int(pos[end])
            reverse_segment(i, j)
            if step(t1, t4, gain_in - d_add + m[t4, t3], depth + 1, dirn, touched):
                touched.update((t1, end, t3, t4))
                return True
            reverse_segment(i, j)
        return False

    queue = deque(range(n))
    in_queue = np.ones(n, bool)
    while queue:
        t1 = int(queue.popleft())
        in_queue[t1] = False
        improved = True
        while improved:
            improved = False
            for dirn in (1, -1):
                end = int(order[(pos[t1] + dirn) % n])
                touched: set = set()
                if step(t1, end, float(m[t1, end]), 1, dirn, touched):
                    improved = True
                    for c in touched:
                        if not in_queue[c]:
                            in_queue[c] = True
                            queue.append(c)
                    break
    return [int(c) for c in order]


def _double_bridge(tour: list[int], rng) -> list[int]:
    """4-opt kick: cut the cycle in three places and swap the middle blocks.

    The one perturbation sequential edge exchange cannot undo in a single
    move, which is what makes it the standard escape from its local optima.
    """
    n = len(tour)
    i, j, k = sorted(int(c) for c in rng.choice(np.arange(1, n), 3, replace=False))
    return tour[:i] + tour[j:k] + tour[i:j] + tour[k:]


def _best_of_starts(m: np.ndarray, n_starts: int = 8) -> list[int]:
    """NN + edge exchange from several evenly spaced starts, then a round of
    double-bridge kicks restarted from the incumbent.

    A single greedy start occasionally strands the exchange in a local
    optimum; deterministic restarts plus kicks are cheap insurance. The kick
    budget shrinks with instance size so big inputs stay fast. Ties keep the
    earliest candidate, so the result is stable; the kick sequence comes
    from a fixed-seed generator, so the whole search is reproducible.
    """
    n = m.shape[0]
    starts = np.unique(np.linspace(0, n - 1, min(n, n_starts)).astype(int))
    best_tour, best_cost = None, np.inf
    for s in starts:
        tour = _lk_improve(m, _nn_tour(m, start=int(s)))
        cost = _route_cost(m, tour, closed=True)
        if cost < best_cost - _EPS:
            best_tour, best_cost = tour, cost
    rng = np.random.default_rng(0)
    for _ in range(max(8, min(64, 512 // n))) if n >= 5 else range(0):
        tour = _lk_improve(m, _double_bridge(best_tour, rng))
        cost = _route_cost(m, tour, closed=True)
        if cost < best_cost - _EPS:
            best_tour, best_cost = tour, cost
    return best_tour


def order_trajectory(matrix, mode: str = "open", force_heuristic: bool = False,
                     view_ids: list[str] | None = None) -> Trajectory:
    """Order views by accumulated pairwise loss.

    mode "open" (default) finds a Hamiltonian path; internally the heuristic
    reduces to a closed tour through a zero-cost dummy city. mode "closed"
    keeps the cycle and includes the closing edge in total_cost. Instances
    with n <= 10 are solved exactly and tagged method="exact".
    """
    m = _check_matrix(matrix)
    n = m.shape[0]
    if mode not in ("open", "closed"):
        raise ValueError(f"unknown mode {mode!r}")
    if n == 0:
        raise EmptyTrajectory("empty cost matrix")
    if view_ids is not None and len(view_ids) != n:
        raise InvalidMatrix(f"{len(view_ids)} view ids for {n} poses")
    if n <= 2:
        order = list(range(n))
        return Trajectory(order, _route_cost(m, order, mode == "closed"),
                          "trivial", mode, view_ids)

    if n <= _EXACT_LIMIT and not force_heuristic:
        order, cost = (_held_karp_path(m) if mode == "open" else _held_karp_tour(m))
        return Trajectory(order, cost, "exact", mode, view_ids)

    if mode == "open":
        # Dummy city at zero distance to everyone turns the path into a tour.
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = m
        tour = _best_of_starts(aug)
        at = tour.index(n)
        order = tour[at + 1:] + tour[:at]
    else:
        order = _best_of_starts(m)
    return Trajectory(order, _route_cost(m, order, mode == "closed"),
                      "nn+lk", mode, view_ids)


def order_poses(poses, weights: PoseWeights | None = None, mode: str = "open",
                normalize: bool = False) -> Trajectory:
    """Convenience wrapper: poses -> loss matrix -> trajectory with view ids."""
    ps = normalize_translations(poses) if normalize else list(poses)
    m = pose_loss_matrix(ps, weights)
    return order_trajectory(m, mode=mode, view_ids=[p.view_id for p in ps])


# --- COLMAP text I/O ---------------------------------------------------------

def read_images_text(path) -> list[CameraPose]:
    """Parse a COLMAP images.txt into poses (file order preserved).

    Records alternate between an image line

        IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME

    and a 2D-point line, which may be empty and is ignored here. Comment
    lines start with '#'. Malformed records raise SchemaError with the
    offending line number.
    """
    poses: list[CameraPose] = []
    expecting_points = False
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if line.startswith("#"):
                continue
            if expecting_points:
                expecting_points = False
                continue
            if not line:
                continue
            toks = line.split()
            if len(toks) < 10:
                raise SchemaError(f"image line has {len(toks)} fields, expected >= 10",
                                  line=lineno)
            try:
                float(toks[0])
                q = np.array([float(t) for t in toks[1:5]])
                t = np.array([float(v) for v in toks[5:8]])
                float(toks[8])
            except ValueError:
                raise SchemaError("non-numeric pose field", line=lineno)
            name = " ".join(toks[9:])
            try:
                rot = quat_to_rot(q)
            except ValueError as e:
                raise SchemaError(str(e), line=lineno)
            poses.append(CameraPose(rot, t, name))
            expecting_points = True
    return poses
