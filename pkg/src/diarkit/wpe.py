"""Wavelet-packet speaker energy.

Full packet tree over a 12-tap Symlet-6 orthonormal filter bank. The signal
is zero-padded to a multiple of 2**depth and the tree uses periodized
convolutions, so the transform is exactly orthonormal: coefficient energy
equals sample energy and the inverse is the adjoint.

Leaves are kept in natural frequency order. The raw low/high recursion
produces Paley order, where every descent through a high-pass band mirrors
the spectrum; the binary-reflected Gray code undoes that, and selecting
"all leaves overlapping [50, 2000] Hz" means what it says.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Symlet-6 scaling coefficients (sum = sqrt(2), shift-2 orthonormal).
SYM6_SCALING = np.array(
    [
        0.015404109327027373,
        0.0034907120842174702,
        -0.11799011114819057,
        -0.048311742585633,
        0.4910559419267466,
        0.787641141030194,
        0.3379294217276218,
        -0.07263752278646252,
        -0.021060292512300564,
        0.04472490177066578,
        0.0017677118642428036,
        -0.007800708325034148,
    ]
)

DEC_LO = SYM6_SCALING[::-1].copy()
DEC_HI = SYM6_SCALING * np.power(-1.0, np.arange(len(SYM6_SCALING)))

DEFAULT_DEPTH = 6


def _analyze(v: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Periodic correlation with ``filt``, downsampled by 2."""
    n = len(v)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(filt))[None, :]) % n
    return v[idx] @ filt


def _synthesize(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Adjoint of ``_analyze`` for the low/high pair."""
    n = 2 * len(lo)
    out = np.zeros(n)
    for coeffs, filt in ((lo, DEC_LO), (hi, DEC_HI)):
        idx = (2 * np.arange(len(coeffs))[:, None] + np.arange(len(filt))[None, :]) % n
        np.add.at(out, idx, coeffs[:, None] * filt[None, :])
    return out


def _gray(k: int) -> int:
    return k ^ (k >> 1)


@dataclass
class WptTree:
    """Full wavelet-packet decomposition of one signal."""

    depth: int
    leaves: list[np.ndarray]  # frequency order, low band first
    n_samples: int  # original length before padding
    sample_rate: int

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    def leaf_band_hz(self, k: int) -> tuple[float, float]:
        width = (self.sample_rate / 2.0) / self.n_leaves
        return k * width, (k + 1) * width

    def total_energy(self) -> float:
        return float(sum(np.dot(leaf, leaf) for leaf in self.leaves))


def wpt(signal: np.ndarray, depth: int = DEFAULT_DEPTH, sample_rate: int = 8000) -> WptTree:
    """Depth-``depth`` full packet tree; requires at least 2**depth samples."""
    signal = np.asarray(signal, dtype=np.float64)
    block = 1 << depth
    if len(signal) < block:
        raise ValueError(f"signal too short for depth {depth}: {len(signal)} < {block} samples")
    n_orig = len(signal)
    pad = (-len(signal)) % block
    if pad:
        signal = np.concatenate([signal, np.zeros(pad)])
    nodes = [signal]
    for _ in range(depth):
        nodes = [child for v in nodes for child in (_analyze(v, DEC_LO), _analyze(v, DEC_HI))]
    leaves = [nodes[_gray(k)] for k in range(block)]
    return WptTree(depth=depth, leaves=leaves, n_samples=n_orig, sample_rate=sample_rate)


def inverse_wpt(tree: WptTree) -> np.ndarray:
    nodes = [tree.leaves[_gray_inverse(p)] for p in range(tree.n_leaves)]
    for _ in range(tree.depth):
        nodes = [_synthesize(nodes[i], nodes[i + 1]) for i in range(0, len(nodes), 2)]
    return nodes[0][: tree.n_samples]


def _gray_inverse(p: int) -> int:
    # position in frequency order of the Paley-order node p
    k = 0
    while p:
        k ^= p
        p >>= 1
    return k


def band_energy(tree: WptTree, f_lo: float = 50.0, f_hi: float = 2000.0) -> float:
    """Sum of squared coefficients over every leaf whose nominal band
    overlaps [f_lo, f_hi]."""
    nyquist = tree.sample_rate / 2.0
    if not (0 <= f_lo < f_hi <= nyquist):
        raise ValueError(f"invalid band [{f_lo}, {f_hi}] for Nyquist {nyquist}")
    width = nyquist / tree.n_leaves
    total = 0.0
    for k in range(tree.n_leaves):
        if (k + 1) * width > f_lo and k * width < f_hi:
            total += float(np.dot(tree.leaves[k], tree.leaves[k]))
    return total


def segment_energy(
    channel: np.ndarray,
    segments: list[tuple],
    sample_rate: int = 8000,
    f_lo: float = 50.0,
    f_hi: float = 2000.0,
    depth: int = DEFAULT_DEPTH,
) -> np.ndarray:
    """Band-limited wavelet-packet energy of each ``(start, end, ...)``
    segment of the reference channel; short segments are zero-padded up to
    the minimum transform length."""
    channel = np.asarray(channel, dtype=np.float64)
    block = 1 << depth
    out = np.empty(len(segments))
    for i, seg in enumerate(segments):
        start, end = seg[0], seg[1]
        i0, i1 = int(round(start * sample_rate)), int(round(end * sample_rate))
        if i0 < 0 or i1 > len(channel) or i1 <= i0:
            raise ValueError(f"segment [{start}, {end}] outside audio range")
        samples = channel[i0:i1]
        if len(samples) < block:
            samples = np.concatenate([samples, np.zeros(block - len(samples))])
        out[i] = band_energy(wpt(samples, depth=depth, sample_rate=sample_rate), f_lo, f_hi)
    return out
