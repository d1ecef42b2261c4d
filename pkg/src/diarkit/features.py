"""Frame-level features: MFCC, session CMVN, stream concatenation, splicing,
speech-activity masking, and a flat binary dump format.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.fft import dct

FEATURE_MAGIC = b"FEA1"


@dataclass
class MfccConfig:
    pre_emphasis: float = 0.97
    window_sec: float = 0.025
    hop_sec: float = 0.010
    n_fft: int = 256
    n_mels: int = 26
    fmin_hz: float = 0.0
    fmax_hz: float = 4000.0
    log_floor: float = 1e-10
    n_coeffs: int = 13


@dataclass
class FeatureMatrix:
    """frames x dim matrix with frame timing metadata.

    ``speech_mask`` marks speech frames (None means unknown/all speech).
    ``frame_index`` maps rows back to original frame indices after
    speech-only filtering; None means the identity map.
    """

    data: np.ndarray
    hop_sec: float = 0.010
    window_sec: float = 0.025
    speech_mask: np.ndarray | None = None
    frame_index: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] == 0:
            raise ValueError("feature matrix must be 2-D with at least one frame")
        if not np.isfinite(self.data).all():
            raise ValueError("feature matrix contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def frame_center_times(self) -> np.ndarray:
        idx = self.frame_index if self.frame_index is not None else np.arange(self.n_frames)
        return idx * self.hop_sec + self.window_sec / 2.0


def mel_from_hz(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_from_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, rate: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters on the mel scale, evaluated at rfft bin centers."""
    edges = hz_from_mel(np.linspace(mel_from_hz(fmin), mel_from_hz(fmax), n_mels + 2))
    bins_hz = np.arange(n_fft // 2 + 1) * rate / n_fft
    fb = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        lo, ctr, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bins_hz - lo) / (ctr - lo)
        down = (hi - bins_hz) / (hi - ctr)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mfcc(signal: np.ndarray, rate: int, config: MfccConfig | None = None) -> FeatureMatrix:
    """13-dim MFCCs (c0 included): pre-emphasis, Hamming window, power
    spectrum, mel filterbank, floored log, orthonormal DCT-II.
    """
    cfg = config or MfccConfig()
    signal = np.asarray(signal, dtype=np.float64)
    win = int(round(cfg.window_sec * rate))
    hop = int(round(cfg.hop_sec * rate))
    if len(signal) < win:
        raise ValueError(f"signal shorter than one window ({len(signal)} < {win} samples)")
    emphasized = np.concatenate([signal[:1], signal[1:] - cfg.pre_emphasis * signal[:-1]])
    n_frames = (len(signal) - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = emphasized[idx] * np.hamming(win)
    spectrum = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, rate, cfg.fmin_hz, cfg.fmax_hz)
    logmel = np.log(np.maximum(spectrum @ fb.T, cfg.log_floor))
    coeffs = dct(logmel, type=2, norm="ortho", axis=1)[:, : cfg.n_coeffs]
    return FeatureMatrix(coeffs, hop_sec=cfg.hop_sec, window_sec=cfg.window_sec)


def cmvn(f: FeatureMatrix, mask: np.ndarray | None = None) -> FeatureMatrix:
    """Zero-mean unit-variance per dimension, statistics over speech frames.

    Dimensions with vanishing variance are zeroed (and reported) instead of
    amplifying noise.
    """
    if mask is None:
        mask = f.speech_mask if f.speech_mask is not None else np.ones(f.n_frames, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.sum() < 2:
        raise ValueError("CMVN needs at least 2 speech frames")
    sel = f.data[mask]
    mean = sel.mean(axis=0)
    var = sel.var(axis=0)
    dead = var < 1e-12
    if dead.any():
        warnings.warn(f"CMVN: {int(dead.sum())} constant dimension(s) zeroed")
    std = np.sqrt(np.where(dead, 1.0, var))
    out = (f.data - mean) / std
    out[:, dead] = 0.0
    return replace(f, data=out)


def concat_streams(per_channel: list[FeatureMatrix]) -> FeatureMatrix:
    """Frame-wise concatenation [ch0 | ch1 | ...]; channel order is the
    input file order."""
    first = per_channel[0]
    for i, f in enumerate(per_channel[1:], start=1):
        if f.n_frames != first.n_frames:
            raise ValueError(f"channel {i} has {f.n_frames} frames, expected {first.n_frames}")
        if abs(f.hop_sec - first.hop_sec) > 1e-12:
            raise ValueError("channels disagree on hop")
    return replace(first, data=np.hstack([f.data for f in per_channel]))


def splice(f: FeatureMatrix, left: int = 5, right: int = 5) -> FeatureMatrix:
    """Stack each frame with its temporal context, replicating the edge
    frame where context is missing."""
    n = f.n_frames
    offsets = np.arange(-left, right + 1)
    idx = np.clip(np.arange(n)[:, None] + offsets[None, :], 0, n - 1)
    stacked = f.data[idx].reshape(n, (left + right + 1) * f.dim)
    return replace(f, data=stacked)


def speech_frame_mask(f: FeatureMatrix, sad_segments: list[tuple]) -> np.ndarray:
    """A frame is speech when its center time lies inside any segment."""
    centers = np.arange(f.n_frames) * f.hop_sec + f.window_sec / 2.0
    mask = np.zeros(f.n_frames, dtype=bool)
    for seg in sad_segments:
        start, end = seg[0], seg[1]
        mask |= (centers >= start) & (centers <= end)
    return mask


def apply_sad(f: FeatureMatrix, sad_segments: list[tuple], keep_all: bool = False) -> FeatureMatrix:
    """Oracle mode (default) keeps speech frames only, with an index map back
    to original frame times; ``keep_all`` keeps every frame and just attaches
    the mask so non-speech can be modeled downstream.
    """
    mask = speech_frame_mask(f, sad_segments)
    if not mask.any():
        raise ValueError("SAD segments select no frames")
    base = f.frame_index if f.frame_index is not None else np.arange(f.n_frames)
    if keep_all:
        return replace(f, speech_mask=mask, frame_index=base)
    kept = np.where(mask)[0]
    return replace(f, data=f.data[kept], speech_mask=np.ones(len(kept), dtype=bool), frame_index=base[kept])


def write_features(path: str, f: FeatureMatrix):
    """Flat binary dump: 16-byte header (magic, frames, dim, hop in
    microseconds), then row-major little-endian float32."""
    header = struct.pack("<4sIII", FEATURE_MAGIC, f.n_frames, f.dim, int(round(f.hop_sec * 1e6)))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(f.data.astype("<f4").tobytes(order="C"))


def read_features(path: str) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"{path}: truncated feature header")
        magic, frames, dim, hop_us = struct.unpack("<4sIII", header)
        if magic != FEATURE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(frames * dim * 4), dtype="<f4").reshape(frames, dim)
    return FeatureMatrix(data.astype(np.float64), hop_sec=hop_us / 1e6)
