"""Shared time-segment containers.

A segment is a ``(start_sec, end_sec, label)`` tuple; ``label`` is a speaker
name such as ``spk0`` or the reserved non-speech label ``NS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

NON_SPEECH_LABEL = "NS"

# Two segments closer than this are considered time-contiguous.
CONTIGUITY_EPS = 1e-6

# RTTM times carry 3 decimals, so segments read back from disk may overlap
# by up to a rounding step without being genuinely overlapped speech.
ROUNDING_TOL = 2e-3


@dataclass
class DiarizationHypothesis:
    """Ordered, non-overlapping labeled segments covering the speech region."""

    segments: list[tuple[float, float, str]] = field(default_factory=list)

    def __post_init__(self):
        self.segments = [(float(s), float(e), str(lab)) for s, e, lab in self.segments]
        self.validate()

    def validate(self):
        prev_end = None
        for i, (start, end, _) in enumerate(self.segments):
            if end <= start:
                raise ValueError(f"segment {i}: end {end} <= start {start}")
            if prev_end is not None and start < prev_end - ROUNDING_TOL:
                raise ValueError(f"segment {i} overlaps previous (start {start} < end {prev_end})")
            prev_end = end

    @property
    def labels(self) -> list[str]:
        """Distinct labels in first-appearance order, non-speech included."""
        seen = []
        for _, _, lab in self.segments:
            if lab not in seen:
                seen.append(lab)
        return seen

    @property
    def speakers(self) -> list[str]:
        return [lab for lab in self.labels if lab != NON_SPEECH_LABEL]

    def speech_segments(self) -> list[tuple[float, float, str]]:
        return [seg for seg in self.segments if seg[2] != NON_SPEECH_LABEL]

    def duration(self) -> float:
        return self.segments[-1][1] if self.segments else 0.0


def merge_contiguous(segments: list[tuple[float, float, str]]) -> list[tuple[float, float, str]]:
    """Fuse time-adjacent segments that carry the same label.

    Same-label segments separated by a gap (e.g. removed non-speech) are
    kept apart.
    """
    merged: list[tuple[float, float, str]] = []
    for seg in sorted(segments, key=lambda s: s[0]):
        if merged and merged[-1][2] == seg[2] and seg[0] - merged[-1][1] <= CONTIGUITY_EPS:
            merged[-1] = (merged[-1][0], max(merged[-1][1], seg[1]), seg[2])
        else:
            merged.append(seg)
    return merged
