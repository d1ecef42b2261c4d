"""Session audio: loading, resampling, synthesis, and segment files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .segments import DiarizationHypothesis, merge_contiguous

DEFAULT_RATE = 8000
HOP_SEC = 0.010

# Resampler quality knobs: Kaiser-windowed sinc, fixed kernel support.
_KAISER_BETA = 8.0
_SINC_TAPS = 64

MAX_DELAY_MS = 50.0


@dataclass
class MultiStreamAudio:
    """Synchronized single-speaker-array channels at a common sample rate."""

    channels: list[np.ndarray]
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not self.channels:
            raise ValueError("need at least one channel")
        lengths = {len(c) for c in self.channels}
        if len(lengths) != 1:
            raise ValueError(f"channels differ in length: {sorted(lengths)}")

    @property
    def channel_count(self) -> int:
        return len(self.channels)

    @property
    def n_samples(self) -> int:
        return len(self.channels[0])

    @property
    def duration_sec(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class VoiceSpec:
    """Harmonic voice: pitch, spectral tilt, and formant-like resonances.

    ``vowel_spread`` and ``f0_jitter`` set how much each turn's resonances
    and pitch wander around the base values, so one speaker's turns are
    varied (multi-modal in feature space) the way real speech is.
    """

    f0_hz: float
    tilt_db_per_octave: float = -6.0
    resonances_hz: tuple[float, ...] = (500.0, 1500.0, 2500.0)
    vowel_spread: float = 0.20
    f0_jitter: float = 0.04


@dataclass
class SessionScript:
    """Ground-truth plan for a synthetic session.

    Events are ``(speaker_index, start_sec, duration_sec)`` and must not
    overlap: the reference derived from them is single-label.
    """

    speakers: list[VoiceSpec]
    events: list[tuple[int, float, float]]
    total_duration_sec: float

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e[1])
        prev_end = 0.0
        for spk, start, dur in self.events:
            if not (0 <= spk < len(self.speakers)):
                raise ValueError(f"event speaker index {spk} out of range")
            if start < 0 or dur <= 0 or start + dur > self.total_duration_sec + 1e-9:
                raise ValueError(f"event ({spk}, {start}, {dur}) outside session")
            if start < prev_end - 1e-9:
                raise ValueError(f"events overlap at t={start}")
            prev_end = start + dur

    def reference(self) -> DiarizationHypothesis:
        segs = [(start, start + dur, f"spk{spk}") for spk, start, dur in self.events]
        return DiarizationHypothesis(segs)

    def to_json(self) -> str:
        return json.dumps(
            {
                "total_duration_sec": self.total_duration_sec,
                "speakers": [
                    {
                        "f0_hz": v.f0_hz,
                        "tilt_db_per_octave": v.tilt_db_per_octave,
                        "resonances_hz": list(v.resonances_hz),
                    }
                    for v in self.speakers
                ],
                "events": [[spk, start, dur] for spk, start, dur in self.events],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SessionScript":
        raw = json.loads(text)
        speakers = [
            VoiceSpec(
                f0_hz=float(v["f0_hz"]),
                tilt_db_per_octave=float(v.get("tilt_db_per_octave", -6.0)),
                resonances_hz=tuple(float(r) for r in v.get("resonances_hz", (500.0, 1500.0, 2500.0))),
            )
            for v in raw["speakers"]
        ]
        events = [(int(e[0]), float(e[1]), float(e[2])) for e in raw["events"]]
        return cls(speakers=speakers, events=events, total_duration_sec=float(raw["total_duration_sec"]))


def _read_wav(path: str) -> tuple[int, np.ndarray]:
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise ValueError(f"unreadable WAV file {path!r}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"zero-length audio in {path!r}")
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype} in {path!r}")
    return int(rate), data


def write_wav(path: str, samples: np.ndarray, rate: int):
    wavfile.write(path, rate, samples.astype(np.float32))


def resample(signal: np.ndarray, in_rate: int, out_rate: int) -> np.ndarray:
    """Windowed-sinc resampling (Kaiser window, fixed tap count).

    Identity passthrough when the rates match, so already-at-rate audio is
    bit-identical.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if in_rate == out_rate:
        return signal
    ratio = out_rate / in_rate
    n_out = int(math.floor(len(signal) * ratio))
    half = _SINC_TAPS // 2
    # Cutoff at the narrower Nyquist, in cycles per input sample.
    fc = 0.5 * min(1.0, ratio)
    padded = np.concatenate([np.zeros(half), signal, np.zeros(half + 1)])
    out = np.empty(n_out)
    offsets = np.arange(-half + 1, half + 1, dtype=np.float64)
    i0 = np.i0(_KAISER_BETA)
    chunk = 1 << 18
    for lo in range(0, n_out, chunk):
        hi = min(lo + chunk, n_out)
        t = np.arange(lo, hi, dtype=np.float64) / ratio
        base = np.floor(t).astype(np.int64)
        frac = t - base
        u = offsets[None, :] - frac[:, None]
        kernel = 2.0 * fc * np.sinc(2.0 * fc * u)
        win_arg = 1.0 - (u / half) ** 2
        kernel *= np.where(win_arg > 0, np.i0(_KAISER_BETA * np.sqrt(np.clip(win_arg, 0, None))), 0.0) / i0
        cols = base[:, None] + np.arange(-half + 1, half + 1)[None, :] + half
        out[lo:hi] = np.einsum("ij,ij->i", padded[cols], kernel)
    return out


def load_session(paths: list[str], target_rate: int = DEFAULT_RATE) -> MultiStreamAudio:
    """Load one mono WAV per channel (or a single multi-channel WAV) and
    resample everything to ``target_rate``.

    Channels are truncated to the shortest stream; duration mismatches
    beyond one hop are rejected.
    """
    if not paths:
        raise ValueError("no input files")
    raw: list[tuple[str, int, np.ndarray]] = []
    if len(paths) == 1:
        rate, data = _read_wav(paths[0])
        if data.ndim == 2:
            for c in range(data.shape[1]):
                raw.append((paths[0], rate, data[:, c]))
        else:
            raw.append((paths[0], rate, data))
    else:
        for path in paths:
            rate, data = _read_wav(path)
            if data.ndim != 1:
                raise ValueError(f"expected mono WAV, got {data.shape[1]} channels in {path!r}")
            raw.append((path, rate, data))

    durations = [len(d) / r for _, r, d in raw]
    shortest = min(durations)
    for (path, _, _), dur in zip(raw, durations):
        if dur - shortest > HOP_SEC:
            raise ValueError(
                f"channel duration mismatch: {path!r} is {dur - shortest:.3f} s longer than the shortest stream"
            )
    channels = [resample(d, r, target_rate) for _, r, d in raw]
    n = min(len(c) for c in channels)
    channels = [c[:n] for c in channels]
    return MultiStreamAudio(channels=channels, sample_rate=target_rate)


def _render_tone_complex(voice: VoiceSpec, n: int, rate: int, f0_scale: float, vowel_scale: float) -> np.ndarray:
    """Additive harmonic unit shaped by tilt and resonance gains."""
    t = np.arange(n) / rate
    f0 = voice.f0_hz * f0_scale
    f_max = 0.45 * rate
    n_harm = max(1, int(f_max / f0))
    h = np.arange(1, n_harm + 1, dtype=np.float64)
    freqs = h * f0
    amps = 10.0 ** (voice.tilt_db_per_octave * np.log2(h) / 20.0)
    res_gain = np.full_like(freqs, 0.05)
    for fc in voice.resonances_hz:
        fc = fc * vowel_scale
        bw = 0.15 * fc
        res_gain += (bw / 2) ** 2 / ((freqs - fc) ** 2 + (bw / 2) ** 2)
    amps *= res_gain
    sig = np.zeros(n)
    for a, f in zip(amps, freqs):
        sig += a * np.sin(2 * np.pi * f * t)
    rms = np.sqrt(np.mean(sig**2))
    return 0.1 * sig / max(rms, 1e-12)


def _render_voice(voice: VoiceSpec, n: int, rate: int, rng: np.random.Generator) -> np.ndarray:
    """A turn is a run of phone-like units (150-350 ms), each with its own
    resonance and pitch scale, so one speaker's frames are multi-modal the
    way real speech is."""
    out = np.empty(n)
    edge = max(2, int(0.005 * rate))
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)
    pos = 0
    while pos < n:
        unit_len = min(n - pos, int(rng.uniform(0.15, 0.35) * rate))
        f0_scale = 1.0 + voice.f0_jitter * float(rng.uniform(-1, 1))
        vowel_scale = 1.0 + voice.vowel_spread * float(rng.uniform(-1, 1))
        unit = _render_tone_complex(voice, unit_len, rate, f0_scale, vowel_scale)
        if unit_len > 2 * edge:
            unit[:edge] *= ramp
            unit[-edge:] *= ramp[::-1]
        out[pos : pos + unit_len] = unit
        pos += unit_len
    return out


def synth_session(
    script: SessionScript,
    channel_count: int,
    delays_ms: list[float],
    gains: list[float],
    noise_snr_db: float,
    seed: int,
    rate: int = DEFAULT_RATE,
) -> tuple[MultiStreamAudio, DiarizationHypothesis]:
    """Render a scripted multi-speaker session into C delayed, scaled,
    noise-corrupted copies of one mix, plus the reference segmentation.

    Deterministic given (script, params, seed).
    """
    if len(delays_ms) != channel_count or len(gains) != channel_count:
        raise ValueError("delays_ms and gains must have one entry per channel")
    if any(d > MAX_DELAY_MS or d < 0 for d in delays_ms):
        raise ValueError(f"channel delays must lie in [0, {MAX_DELAY_MS}] ms")
    f0s = sorted(v.f0_hz for v in script.speakers)
    for a, b in zip(f0s, f0s[1:]):
        if b - a < 30.0:
            raise ValueError("speaker fundamentals must differ by at least 30 Hz")

    n = int(round(script.total_duration_sec * rate))
    mix = np.zeros(n)
    speech_mask = np.zeros(n, dtype=bool)
    fade = int(0.020 * rate)
    voice_rng = np.random.default_rng(seed)
    for spk, start, dur in script.events:
        i0, i1 = int(round(start * rate)), min(n, int(round((start + dur) * rate)))
        if i1 <= i0:
            continue
        seg = _render_voice(script.speakers[spk], i1 - i0, rate, voice_rng)
        env = np.ones(i1 - i0)
        k = min(fade, len(env) // 2)
        if k > 0:
            ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
            env[:k] *= ramp
            env[-k:] *= ramp[::-1]
        mix[i0:i1] += seg * env
        speech_mask[i0:i1] = True

    rng = np.random.default_rng(seed)
    p_speech = np.mean(mix[speech_mask] ** 2) if speech_mask.any() else 0.0
    channels = []
    for c in range(channel_count):
        shift = int(round(delays_ms[c] * rate / 1000.0))
        delayed = np.concatenate([np.zeros(shift), mix])[:n]
        chan = gains[c] * delayed
        if p_speech > 0:
            noise_std = math.sqrt(gains[c] ** 2 * p_speech / 10.0 ** (noise_snr_db / 10.0))
        else:
            noise_std = 1e-3
        chan = chan + rng.normal(0.0, noise_std, n)
        channels.append(chan)
    return MultiStreamAudio(channels=channels, sample_rate=rate), script.reference()


def demo_script(
    n_speakers: int,
    duration_sec: float,
    seed: int,
    turn_range: tuple[float, float] = (2.0, 6.0),
    gap_range: tuple[float, float] = (0.3, 0.8),
    shares: list[float] | None = None,
) -> SessionScript:
    """Random conversation plan: alternating turns with short pauses.

    ``shares`` biases how often each speaker takes the floor, so total
    speaking time tracks the requested proportions.
    """
    rng = np.random.default_rng(seed)
    voices = [
        VoiceSpec(
            f0_hz=100.0 + 40.0 * i,
            tilt_db_per_octave=-5.0 - 1.0 * (i % 3),
            resonances_hz=(400.0 + 90.0 * i, 1200.0 + 220.0 * i, 2300.0 + 150.0 * i),
        )
        for i in range(n_speakers)
    ]
    if shares is None:
        probs = np.full(n_speakers, 1.0 / n_speakers)
    else:
        if len(shares) != n_speakers:
            raise ValueError("shares must have one entry per speaker")
        probs = np.asarray(shares, dtype=np.float64)
        probs = probs / probs.sum()
    events = []
    t = float(rng.uniform(*gap_range))
    prev = -1
    while True:
        p = probs.copy()
        if prev >= 0 and n_speakers > 1:
            p[prev] = 0.0
            p = p / p.sum()
        spk = int(rng.choice(n_speakers, p=p))
        dur = float(rng.uniform(*turn_range)) * (0.5 + probs[spk] * n_speakers / 2)
        if t + dur > duration_sec - 0.2:
            break
        events.append((spk, round(t, 3), round(dur, 3)))
        t += dur + float(rng.uniform(*gap_range))
        prev = spk
    return SessionScript(speakers=voices, events=events, total_duration_sec=duration_sec)


def read_segments(path: str) -> list[tuple]:
    """Parse a segments file: ``start_sec end_sec [label]`` per line,
    ``#`` comments; RTTM files are detected and parsed as labeled segments.

    Returns ``(start, end)`` or ``(start, end, label)`` tuples, sorted and
    validated non-overlapping (labeled entries only).
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    body = [ln.strip() for ln in lines]
    if any(ln.startswith("SPEAKER") for ln in body if ln):
        from . import scoring

        return [tuple(seg) for seg in scoring.rttm_read(path)]

    out = []
    for lineno, line in enumerate(body, start=1):
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}: unparsable segment line {lineno}: {line!r}")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ValueError(f"{path}: unparsable segment line {lineno}: {line!r}") from exc
        if end <= start:
            raise ValueError(f"{path}: end before start at line {lineno}")
        out.append((start, end, parts[2]) if len(parts) == 3 else (start, end))
    out.sort(key=lambda s: s[0])
    labeled = any(len(s) == 3 for s in out)
    for a, b in zip(out, out[1:]):
        if b[0] < a[1] - 1e-9 and labeled:
            raise ValueError(f"{path}: overlapping reference segments at t={b[0]}")
    return out


def write_segments(path: str, segments: list[tuple]):
    with open(path, "w", encoding="utf-8") as fh:
        for seg in segments:
            if len(seg) == 3:
                fh.write(f"{seg[0]:.3f} {seg[1]:.3f} {seg[2]}\n")
            else:
                fh.write(f"{seg[0]:.3f} {seg[1]:.3f}\n")


def sad_from_script(script: SessionScript) -> list[tuple[float, float]]:
    """Speech-activity intervals implied by a script's events."""
    merged = merge_contiguous([(s, s + d, "speech") for _, s, d in script.events])
    return [(s, e) for s, e, _ in merged]
