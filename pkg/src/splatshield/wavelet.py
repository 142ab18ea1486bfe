"""Single-level orthonormal Haar analysis, detail suppression, energy ratios.

The transform is defined block-wise. For each disjoint 2x2 block

    [[a, b],
     [c, d]]

the four coefficients are

    ll = (a + b + c + d) / 2
    lh = (a + b - c - d) / 2     (row difference: responds to horizontal edges)
    hl = (a - b + c - d) / 2     (column difference: vertical edges)
    hh = (a - b - c + d) / 2     (diagonal)

which is orthonormal, so energy is preserved and the inverse is exact.
Odd-sized images are edge-replicated to even dimensions before analysis and
cropped back after synthesis; the original size rides along in SubbandSet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, TooSmall, ZeroEnergy
from .imagecore import Image, clipped_image

BAND_NAMES = ("ll", "lh", "hl", "hh")


@dataclass(frozen=True)
class SubbandSet:
    """One channel's four coefficient planes plus the pre-pad image size."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray
    orig_height: int
    orig_width: int

    def __post_init__(self):
        shape = self.ll.shape
        for name in ("lh", "hl", "hh"):
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"subband {name} has shape "
                                        f"{getattr(self, name).shape}, expected {shape}")

    def band(self, name: str) -> np.ndarray:
        if name not in BAND_NAMES:
            raise ValueError(f"unknown subband {name!r}")
        return getattr(self, name)


def _pad_even(p: np.ndarray) -> np.ndarray:
    ph = p.shape[0] % 2
    pw = p.shape[1] % 2
    if ph or pw:
        p = np.pad(p, ((0, ph), (0, pw)), mode="edge")
    return p


def _dwt_plane(p: np.ndarray):
    p = _pad_even(np.asarray(p, np.float64))
    a = p[0::2, 0::2]
    b = p[0::2, 1::2]
    c = p[1::2, 0::2]
    d = p[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a + b - c - d) / 2.0
    hl = (a - b + c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, lh, hl, hh


def _idwt_plane(ll, lh, hl, hh, height: int, width: int) -> np.ndarray:
    a = (ll + lh + hl + hh) / 2.0
    b = (ll + lh - hl - hh) / 2.0
    c = (ll - lh + hl - hh) / 2.0
    d = (ll - lh - hl + hh) / 2.0
    out = np.empty((2 * ll.shape[0], 2 * ll.shape[1]), np.float64)
    out[0::2, 0::2] = a
    out[0::2, 1::2] = b
    out[1::2, 0::2] = c
    out[1::2, 1::2] = d
    return out[:height, :width]


def dwt2(img: Image) -> tuple[SubbandSet, SubbandSet, SubbandSet]:
    """Analyze each channel; returns one SubbandSet per channel."""
    h, w = img.height, img.width
    out = []
    for plane in img.planes:
        ll, lh, hl, hh = _dwt_plane(plane)
        out.append(SubbandSet(ll, lh, hl, hh, h, w))
    return tuple(out)


def idwt2(bands: tuple[SubbandSet, SubbandSet, SubbandSet]) -> Image:
    """Exact inverse of dwt2, cropped to the recorded original size.

    Values are clamped to [0, 1] at this materialization boundary; for
    coefficients of a real image the clamp only absorbs round-off.
    """
    if len(bands) != 3:
        raise DimensionMismatch(f"expected 3 channel SubbandSets, got {len(bands)}")
    h, w = bands[0].orig_height, bands[0].orig_width
    planes = [_idwt_plane(b.ll, b.lh, b.hl, b.hh, h, w) for b in bands]
    return clipped_image(np.stack(planes))


def _filter_plane(p: np.ndarray, level: int) -> np.ndarray:
    h, w = p.shape
    ll, _, _, _ = _dwt_plane(p)
    if level > 1:
        ll = _filter_plane(ll, level - 1)
    z = np.zeros_like(ll)
    return _idwt_plane(ll, z, z, z, h, w)


def filter_high_freq(img: Image, level: int = 1) -> Image:
    """Drop everything outside the approximation band and resynthesize.

    At level 1 this equals replacing every aligned 2x2 block by its mean,
    which is also why the operation is idempotent. level > 1 recurses on the
    approximation coefficients before synthesis (4x4 blocks at level 2, ...).
    """
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    return clipped_image(np.stack([_filter_plane(p, level) for p in img.planes]))


# --- energy ------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    """Squared-coefficient energy split across the four subbands.

    per_channel[c, b] is channel c's fraction in band b (order BAND_NAMES);
    rows of zero-energy channels are all zero. mean is the unweighted average
    over channels that carry energy, so it still sums to 1.
    """

    energies: np.ndarray      # (3, 4) raw energy
    per_channel: np.ndarray   # (3, 4) fractions
    mean: np.ndarray          # (4,) fractions

    def as_dict(self) -> dict:
        return {
            "bands": list(BAND_NAMES),
            "per_channel": [[float(v) for v in row] for row in self.per_channel],
            "mean": [float(v) for v in self.mean],
        }

    @property
    def removed_by_filter(self) -> float:
        """Fraction of total energy the detail-suppression filter discards."""
        return float(1.0 - self.mean[0])


def energy_report(bands: tuple[SubbandSet, SubbandSet, SubbandSet]) -> EnergyReport:
    """Per-band energy fractions; raises ZeroEnergy on an all-zero image.

    np.sum's pairwise accumulation keeps the split reduction-order stable, so
    fractions do not wobble with chunking.
    """
    energies = np.zeros((3, 4))
    for ci, b in enumerate(bands):
        for bi, name in enumerate(BAND_NAMES):
            coef = b.band(name)
            energies[ci, bi] = np.sum(coef * coef)
    totals = energies.sum(axis=1)
    if not np.any(totals > 0.0):
        raise ZeroEnergy("all channels have zero energy")
    per_channel = np.zeros_like(energies)
    alive = totals > 0.0
    per_channel[alive] = energies[alive] / totals[alive, None]
    mean = per_channel[alive].mean(axis=0)
    return EnergyReport(energies=energies, per_channel=per_channel, mean=mean)


# --- visualization -----------------------------------------------------------

def subband_ranges(planes) -> list[tuple[float, float]]:
    """(min, max) per channel plane, as used by subband_to_image."""
    return [(float(p.min()), float(p.max())) for p in planes]


def subband_to_image(planes) -> Image:
    """Min-max normalize one band's three channel planes into a viewable Image.

    Each plane is mapped to [0, 1] independently; a constant plane maps to a
    flat 0.5. The result lives at the subband resolution (half the source).
    """
    if len(planes) != 3:
        raise DimensionMismatch(f"expected 3 channel planes, got {len(planes)}")
    out = []
    for p in planes:
        p = np.asarray(p, np.float64)
        if p.shape[0] < 2 or p.shape[1] < 2:
            raise TooSmall("subband planes must be at least 2x2 to visualize")
        lo, hi = p.min(), p.max()
        if hi > lo:
            out.append((p - lo) / (hi - lo))
        else:
            out.append(np.full_like(p, 0.5))
    return clipped_image(np.stack(out))


def band_planes(bands: tuple[SubbandSet, SubbandSet, SubbandSet], name: str):
    """Pull one band from all three channel SubbandSets."""
    return [b.band(name) for b in bands]
