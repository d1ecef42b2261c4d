"""Unsupervised dominance scores.

Per analysis window (5 minutes by default) and speaker, three cues are
collected from the diarization output: turn count, total speaking time,
and wavelet-packet speech energy. The cues are z-scored over the whole
session, combined into a single value by projecting onto the first
principal axis, and turned into per-window probabilities with a softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .segments import NON_SPEECH_LABEL, DiarizationHypothesis

DEFAULT_SEGMENT_LEN_SEC = 300.0

FEATURE_NAMES = ("turns", "spts", "spens")


@dataclass
class SpeakerSegmentFeatures:
    segment_index: int
    speaker: str
    turns: int
    spts: float
    spens: float


@dataclass
class CombVector:
    p: np.ndarray  # combined feature per speaker, window order
    pca_axis: np.ndarray  # unit 3-vector
    eigenvalues: np.ndarray  # descending


@dataclass
class DominanceReport:
    speakers: list[str]
    segment_len_sec: float
    turns: np.ndarray  # (windows, speakers)
    spts: np.ndarray
    spens: np.ndarray
    comb: np.ndarray
    ds: np.ndarray
    pca_axis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n_segments(self) -> int:
        return self.turns.shape[0]

    def to_csv(self) -> str:
        lines = ["segment,speaker,turns,spts,spens,comb,ds"]
        for w in range(self.n_segments):
            for s, spk in enumerate(self.speakers):
                lines.append(
                    f"{w},{spk},{self.turns[w, s]:.6g},{self.spts[w, s]:.6g},"
                    f"{self.spens[w, s]:.6g},{self.comb[w, s]:.6g},{self.ds[w, s]:.6g}"
                )
        return "\n".join(lines) + "\n"


def extract_features(
    hyp: DiarizationHypothesis,
    energies: np.ndarray,
    segment_len_sec: float = DEFAULT_SEGMENT_LEN_SEC,
    session_duration_sec: float | None = None,
) -> list[SpeakerSegmentFeatures]:
    """Per-window, per-speaker turn counts, speaking time, and energy.

    ``energies`` holds one wavelet-packet band energy per hypothesis
    segment. A segment straddling a window boundary contributes time and
    energy pro-rata and one turn to each window it touches. Non-speech
    segments are skipped.
    """
    segs = hyp.segments
    if not segs:
        raise ValueError("empty hypothesis")
    if len(energies) != len(segs):
        raise ValueError("need one energy value per hypothesis segment")
    duration = session_duration_sec if session_duration_sec is not None else segs[-1][1]
    n_windows = max(1, math.ceil(duration / segment_len_sec))
    speakers = sorted({lab for _, _, lab in segs if lab != NON_SPEECH_LABEL})

    turns = np.zeros((n_windows, len(speakers)), dtype=np.int64)
    spts = np.zeros((n_windows, len(speakers)))
    spens = np.zeros((n_windows, len(speakers)))
    for (start, end, label), energy in zip(segs, energies):
        if label == NON_SPEECH_LABEL:
            continue
        s = speakers.index(label)
        w0 = min(int(start // segment_len_sec), n_windows - 1)
        w1 = min(int(np.nextafter(end, -np.inf) // segment_len_sec), n_windows - 1)
        for w in range(w0, w1 + 1):
            lo = max(start, w * segment_len_sec)
            hi = min(end, (w + 1) * segment_len_sec)
            if hi <= lo:
                continue
            frac = (hi - lo) / (end - start)
            turns[w, s] += 1
            spts[w, s] += hi - lo
            spens[w, s] += float(energy) * frac

    table = []
    for w in range(n_windows):
        for s, spk in enumerate(speakers):
            table.append(
                SpeakerSegmentFeatures(
                    segment_index=w, speaker=spk, turns=int(turns[w, s]), spts=float(spts[w, s]), spens=float(spens[w, s])
                )
            )
    return table


def normalize_and_combine(table: list[SpeakerSegmentFeatures]) -> list[CombVector]:
    """Session-level z-scoring of the three cues, then projection onto the
    leading principal axis.

    The axis sign is fixed so the speaking-time loading is positive (turn
    loading decides ties), keeping "larger means more dominant" stable.
    """
    speakers = sorted({r.speaker for r in table})
    n_windows = max(r.segment_index for r in table) + 1
    raw = np.zeros((n_windows, len(speakers), 3))
    for r in table:
        raw[r.segment_index, speakers.index(r.speaker)] = (r.turns, r.spts, r.spens)
    rows = raw.reshape(-1, 3)

    mean = rows.mean(axis=0)
    var = rows.var(axis=0)
    if len(speakers) == 1 and (var < 1e-24).all():
        # one speaker, no variation: combined feature is all zeros and the
        # softmax below still yields probability one
        axis = np.array([0.0, 1.0, 0.0])
        eig = np.zeros(3)
        return [CombVector(p=np.zeros(len(speakers)), pca_axis=axis, eigenvalues=eig) for _ in range(n_windows)]
    if len(rows) < 2 or (var < 1e-24).all():
        raise ValueError("degenerate session: dominance features carry no variance")
    dead = var < 1e-24
    std = np.sqrt(np.where(dead, 1.0, var))
    z = (rows - mean) / std
    z[:, dead] = 0.0

    cov = (z.T @ z) / len(z)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    axis = eigvecs[:, order[0]]
    if axis[1] < 0 or (axis[1] == 0 and axis[0] < 0):
        axis = -axis

    p = (z @ axis).reshape(n_windows, len(speakers))
    return [CombVector(p=p[w], pca_axis=axis, eigenvalues=eigvals) for w in range(n_windows)]


def dominance_scores(comb: CombVector | np.ndarray) -> np.ndarray:
    """Softmax over the window's combined features, max-subtracted so very
    large values cannot overflow."""
    p = comb.p if isinstance(comb, CombVector) else np.asarray(comb, dtype=np.float64)
    shifted = p - p.max()
    e = np.exp(shifted)
    return e / e.sum()


def dominance_report(
    hyp: DiarizationHypothesis,
    energies: np.ndarray,
    segment_len_sec: float = DEFAULT_SEGMENT_LEN_SEC,
    session_duration_sec: float | None = None,
) -> DominanceReport:
    """End-to-end: features, combination, and softmax scores per window."""
    table = extract_features(hyp, energies, segment_len_sec, session_duration_sec)
    combs = normalize_and_combine(table)
    speakers = sorted({r.speaker for r in table})
    n_windows = len(combs)
    shape = (n_windows, len(speakers))
    turns, spts, spens = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for r in table:
        s = speakers.index(r.speaker)
        turns[r.segment_index, s] = r.turns
        spts[r.segment_index, s] = r.spts
        spens[r.segment_index, s] = r.spens
    comb = np.vstack([c.p for c in combs])
    ds = np.vstack([dominance_scores(c) for c in combs])
    return DominanceReport(
        speakers=speakers,
        segment_len_sec=segment_len_sec,
        turns=turns,
        spts=spts,
        spens=spens,
        comb=comb,
        ds=ds,
        pca_axis=combs[0].pca_axis,
        eigenvalues=combs[0].eigenvalues,
    )
