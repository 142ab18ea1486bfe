"""Classical keypoint matching used to score multi-view consistency per subband.

Detection is FAST-9 on the luma plane (segment test on the 16-pixel Bresenham
circle, 3x3 non-max suppression, top-k by corner score). Description is
256-bit BRIEF sampled from a fixed 31x31 pattern after Gaussian smoothing;
the pattern is generated once from a pinned seed, so descriptors are stable
across runs and machines. Matching is mutual nearest neighbor under Hamming
distance with a Lowe ratio gate.

The pipeline never runs on full-resolution frames here: callers hand it
subband visualizations, which live at half the source resolution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import (
    AllPairsDegenerate,
    MatchedExceedsExtracted,
    NegativeCount,
    SchemaError,
    TooSmall,
)
from .imagecore import Image
from .wavelet import band_planes, dwt2, subband_to_image

_PATTERN_SEED = 0xB121F
_PATTERN_RADIUS = 15  # descriptors sample a 31x31 window
_N_BITS = 256
_SMOOTH_SIGMA = 2.0
_MIN_SIDE = 32

# Bresenham circle of radius 3, in angular order, as (row, col) offsets.
_CIRCLE = np.array([
    (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
], np.int64)


def _make_pattern(seed: int) -> np.ndarray:
    """(256, 4) int offsets (r1, c1, r2, c2), fixed for the package lifetime."""
    rng = np.random.default_rng(seed)
    return rng.integers(-_PATTERN_RADIUS, _PATTERN_RADIUS + 1, size=(_N_BITS, 4))


_PATTERN = _make_pattern(_PATTERN_SEED)
_PATTERN.flags.writeable = False


def grayscale(img: Image) -> np.ndarray:
    r, g, b = img.planes
    return 0.299 * r + 0.587 * g + 0.114 * b


@dataclass(frozen=True)
class KeypointSet:
    """Detected corners plus packed 256-bit descriptors.

    descriptors[i] is 32 packed bytes; empty sets (flat images) are valid and
    carry the `empty` flag rather than raising.
    """

    rows: np.ndarray         # (N,) int
    cols: np.ndarray         # (N,) int
    scores: np.ndarray       # (N,) float
    descriptors: np.ndarray  # (N, 32) uint8
    height: int
    width: int

    def __post_init__(self):
        n = len(self.rows)
        assert len(self.cols) == len(self.scores) == n
        assert self.descriptors.shape == (n, 32)
        if n:
            assert self.rows.min() >= 0 and self.rows.max() < self.height
            assert self.cols.min() >= 0 and self.cols.max() < self.width

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def empty(self) -> bool:
        return len(self.rows) == 0


def _fast_corners(gray: np.ndarray, threshold: float):
    """Segment-test scores for every interior pixel; 0 where not a corner."""
    h, w = gray.shape
    center = gray[3:h - 3, 3:w - 3]
    ring = np.stack([gray[3 + dr:h - 3 + dr, 3 + dc:w - 3 + dc]
                     for dr, dc in _CIRCLE])
    brighter = ring > center + threshold
    darker = ring < center - threshold

    def has_run(mask):
        hit = np.zeros_like(center, bool)
        for s in range(16):
            run = mask[s]
            for k in range(1, 9):
                run = run & mask[(s + k) % 16]
                if not run.any():
                    break
            else:
                hit |= run
        return hit

    corner = has_run(brighter) | has_run(darker)
    # Corner score: total absolute margin past the threshold, the larger of
    # the bright and dark tallies. Only used to rank for NMS / top-k.
    up = np.where(brighter, ring - (center + threshold), 0.0).sum(axis=0)
    down = np.where(darker, (center - threshold) - ring, 0.0).sum(axis=0)
    score = np.zeros((h, w))
    score[3:h - 3, 3:w - 3] = np.where(corner, np.maximum(up, down), 0.0)
    return score


def _nms3(score: np.ndarray) -> np.ndarray:
    from scipy.ndimage import maximum_filter

    keep = (score > 0.0) & (score == maximum_filter(score, size=3, mode="constant"))
    return keep


def detect_and_describe(img: Image, max_keypoints: int = 512,
                        threshold: float = 0.06) -> KeypointSet:
    """FAST-9 corners + BRIEF descriptors on the luma plane.

    Deterministic: fixed sampling pattern, stable tie-breaks (score desc,
    then row, then col). Keypoints too close to the border for the 31x31
    descriptor window are dropped. A featureless image yields an empty set.
    """
    if img.height < _MIN_SIDE or img.width < _MIN_SIDE:
        raise TooSmall(f"detector needs at least {_MIN_SIDE}x{_MIN_SIDE}, "
                       f"got {img.width}x{img.height}")
    gray = grayscale(img)
    score = _fast_corners(gray, threshold)
    keep = _nms3(score)
    m = _PATTERN_RADIUS
    keep[:m, :] = keep[-m:, :] = False
    keep[:, :m] = keep[:, -m:] = False
    rows, cols = np.nonzero(keep)
    if len(rows) == 0:
        return KeypointSet(rows, cols, np.zeros(0), np.zeros((0, 32), np.uint8),
                           img.height, img.width)
    sc = score[rows, cols]
    pick = np.lexsort((cols, rows, -sc))[:max_keypoints]
    rows, cols, sc = rows[pick], cols[pick], sc[pick]

    smoothed = gaussian_filter(gray, _SMOOTH_SIGMA, mode="nearest")
    r1, c1, r2, c2 = _PATTERN.T
    a = smoothed[rows[:, None] + r1[None, :], cols[:, None] + c1[None, :]]
    b = smoothed[rows[:, None] + r2[None, :], cols[:, None] + c2[None, :]]
    desc = np.packbits(a < b, axis=1)
    return KeypointSet(rows, cols, sc, desc, img.height, img.width)


# --- matching ----------------------------------------------------------------

def _hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(Na, Nb) Hamming distances between packed descriptor sets."""
    x = a[:, None, :] ^ b[None, :, :]
    return np.bitwise_count(x).sum(axis=2, dtype=np.int64)


def match_pair(a: KeypointSet, b: KeypointSet, ratio: float = 0.8) -> np.ndarray:
    """Mutual-NN matches passing the Lowe ratio test; (M, 2) index pairs.

    The ratio gate compares best to second-best Hamming distance within the
    forward direction; a tie of two perfect candidates is ambiguous and
    rejected. The result is a partial bijection.
    """
    if a.empty or b.empty:
        return np.zeros((0, 2), np.int64)
    d = _hamming(a.descriptors, b.descriptors)
    fwd = np.argmin(d, axis=1)
    bwd = np.argmin(d, axis=0)
    ia = np.arange(len(a))
    mutual = bwd[fwd] == ia
    best = d[ia, fwd]
    if d.shape[1] >= 2:
        part = np.partition(d, 1, axis=1)
        second = part[:, 1]
        ok = mutual & (best <= ratio * second) & (second > 0)
    else:
        ok = mutual  # no second candidate to disambiguate against
    return np.stack([ia[ok], fwd[ok]], axis=1)


# --- rate aggregation --------------------------------------------------------

@dataclass(frozen=True)
class PairRate:
    view_a: int
    view_b: int
    extracted_a: int
    extracted_b: int
    matched: int
    rate: float

    def as_dict(self) -> dict:
        return {"view_a": self.view_a, "view_b": self.view_b,
                "extracted_a": self.extracted_a, "extracted_b": self.extracted_b,
                "matched": self.matched, "rate": self.rate}


@dataclass(frozen=True)
class RateReport:
    """Aggregated matching rate over trajectory-adjacent pairs of one band."""

    subband: str
    window: int
    denominator: str
    max_keypoints: int
    overall: float
    pairs: list[PairRate] = field(default_factory=list)
    degenerate_pairs: int = 0

    def as_dict(self) -> dict:
        return {
            "subband": self.subband, "window": self.window,
            "denominator": self.denominator, "max_keypoints": self.max_keypoints,
            "overall": self.overall, "degenerate_pairs": self.degenerate_pairs,
            "pairs": [p.as_dict() for p in self.pairs],
        }


def _pair_rate(extracted_a: int, extracted_b: int, matched: int,
               denominator: str) -> float:
    if denominator == "max":
        denom = max(extracted_a, extracted_b)
    elif denominator == "min":
        denom = min(extracted_a, extracted_b)
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    return matched / denom


def _aggregate(rows, window: int, subband: str, denominator: str,
               max_keypoints: int) -> RateReport:
    pairs, degenerate, rates = [], 0, []
    for va, vb, na, nb, matched in rows:
        if min(na, nb) == 0:
            # Matching is vacuous if either view produced nothing; keep such
            # pairs out of the mean instead of dragging it to zero.
            degenerate += 1
            continue
        r = _pair_rate(na, nb, matched, denominator)
        pairs.append(PairRate(va, vb, na, nb, matched, r))
        rates.append(r)
    if not rates:
        raise AllPairsDegenerate(f"no usable pairs in band {subband!r}")
    return RateReport(subband=subband, window=window, denominator=denominator,
                      max_keypoints=max_keypoints, overall=float(np.mean(rates)),
                      pairs=pairs, degenerate_pairs=degenerate)


def subband_keypoints(img: Image, subband: str, max_keypoints: int = 512,
                      threshold: float = 0.06) -> KeypointSet:
    """Detect on the half-resolution visualization of one subband."""
    viz = subband_to_image(band_planes(dwt2(img), subband))
    return detect_and_describe(viz, max_keypoints=max_keypoints, threshold=threshold)


def matching_rate(images, subband: str, window: int = 3, max_keypoints: int = 512,
                  threshold: float = 0.06, ratio: float = 0.8,
                  denominator: str = "max") -> RateReport:
    """Matching rate of one subband along an ordered list of images.

    Every view is matched against the next `window` views in trajectory
    order; a pair's rate is matched / max(extracted_i, extracted_j) (or min,
    per `denominator`), and the overall rate is the unweighted mean over
    pairs. Pairs where a side has no keypoints are excluded but counted.
    """
    kps = [subband_keypoints(im, subband, max_keypoints, threshold) for im in images]
    rows = []
    for i in range(len(kps)):
        for j in range(i + 1, min(i + window, len(kps) - 1) + 1):
            matched = len(match_pair(kps[i], kps[j], ratio=ratio))
            rows.append((i, j, len(kps[i]), len(kps[j]), matched))
    return _aggregate(rows, window, subband, denominator, max_keypoints)


@dataclass(frozen=True)
class MatchReport:
    """Per-band rates plus the high-band mean used as the headline number.

    `high` averages lh and hl; hh is noise-dominated and only included when
    explicitly requested.
    """

    bands: dict
    high: float
    window: int
    view_names: list[str]

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "views": list(self.view_names),
            "high": self.high,
            "bands": {k: v.as_dict() for k, v in self.bands.items()},
            "rates": {k: v.overall for k, v in self.bands.items()},
        }


def build_match_report(images, view_names=None, window: int = 3,
                       include_hh: bool = False, max_keypoints: int = 512,
                       threshold: float = 0.06, ratio: float = 0.8,
                       denominator: str = "max") -> MatchReport:
    names = list(view_names) if view_names is not None \
        else [str(i) for i in range(len(images))]
    bands = {}
    for band in ("ll", "lh", "hl") + (("hh",) if include_hh else ()):
        bands[band] = matching_rate(images, band, window=window,
                                    max_keypoints=max_keypoints,
                                    threshold=threshold, ratio=ratio,
                                    denominator=denominator)
    high = 0.5 * (bands["lh"].overall + bands["hl"].overall)
    return MatchReport(bands=bands, high=high, window=window, view_names=names)


# --- external matcher ingest -------------------------------------------------

_INGEST_HEADER = ["view_a", "view_b", "extracted_a", "extracted_b", "matched"]


def ingest_matches(path, window: int = 0, denominator: str = "max") -> RateReport:
    """Aggregate externally produced match counts from CSV.

    Expected header: view_a,view_b,extracted_a,extracted_b,matched. The same
    aggregation as matching_rate applies, so externally computed pairs drop
    straight into the reporting path. Window is whatever the producer used;
    pass it through for the report.
    """
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file", line=1)
        if [h.strip() for h in header] != _INGEST_HEADER:
            raise SchemaError(f"bad header {header!r}, expected {_INGEST_HEADER}", line=1)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 5:
                raise SchemaError(f"expected 5 columns, got {len(row)}", line=lineno)
            va, vb = row[0].strip(), row[1].strip()
            try:
                na, nb, matched = (int(v) for v in row[2:5])
            except ValueError:
                raise SchemaError(f"non-integer count in {row[2:5]!r}", line=lineno)
            if na < 0 or nb < 0 or matched < 0:
                raise NegativeCount("counts must be >= 0", line=lineno)
            if matched > min(na, nb):
                raise MatchedExceedsExtracted(
                    f"matched={matched} exceeds min(extracted)={min(na, nb)}",
                    line=lineno)
            rows.append((va, vb, na, nb, matched))
    return _aggregate(rows, window, "external", denominator, -1)
