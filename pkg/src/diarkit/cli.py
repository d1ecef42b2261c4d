"""Command line interface: synth, diarize, score, dominance, features.

Exit codes: 0 success, 1 runtime failure inside a module, 2 usage or
validation error. The environment variable ``DIARKIT_SEED`` overrides the
default seed. Output files are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import audio_io, dae, dominance, features, scoring, wpe
from .diarizer import DiarizerConfig, diarize
from .features import FeatureMatrix


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline in one flat namespace."""

    sample_rate: int = 8000
    pre_emphasis: float = 0.97
    window_sec: float = 0.025
    hop_sec: float = 0.010
    n_fft: int = 256
    n_mels: int = 26
    n_coeffs: int = 13
    splice_left: int = 5
    splice_right: int = 5
    feature_kind: str = "bnf"  # bnf | mfcc91
    bottleneck_dim: int = 21
    corruption_level: float = 0.2
    corruption_kind: str = "additive-gaussian"
    learning_rate: float = 0.01
    momentum: float = 0.05
    epochs: int = 10
    batch_size: int = 256
    n_speakers: int = 4
    initial_states: int = 12
    min_duration_sec: float = 0.5
    components_per_initial_segment: int = 2
    self_loop_prob: float = 0.9
    em_iters: int = 5
    max_outer_iters: int = 30
    mode: str = "oracle-sad"  # oracle-sad | no-sad
    seed: int = 0

    def validate(self):
        if self.feature_kind not in ("bnf", "mfcc91"):
            raise UsageError(f"unknown feature kind {self.feature_kind!r}")
        if self.mode not in ("oracle-sad", "no-sad"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.n_speakers < 2:
            raise UsageError("need at least 2 speakers")

    def mfcc_config(self) -> features.MfccConfig:
        return features.MfccConfig(
            pre_emphasis=self.pre_emphasis,
            window_sec=self.window_sec,
            hop_sec=self.hop_sec,
            n_fft=self.n_fft,
            n_mels=self.n_mels,
            fmax_hz=self.sample_rate / 2.0,
            n_coeffs=self.n_coeffs,
        )

    def train_config(self) -> dae.TrainConfig:
        return dae.TrainConfig(
            corruption_level=self.corruption_level,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            epochs=self.epochs,
            batch_size=self.batch_size,
            corruption_kind=self.corruption_kind,
        )

    def diarizer_config(self) -> DiarizerConfig:
        return DiarizerConfig(
            n_speakers=self.n_speakers,
            initial_states=self.initial_states,
            min_duration_sec=self.min_duration_sec,
            components_per_initial_segment=self.components_per_initial_segment,
            no_sad_mode=self.mode == "no-sad",
            self_loop_prob=self.self_loop_prob,
            em_iters=self.em_iters,
            max_outer_iters=self.max_outer_iters,
            seed=self.seed,
        )


def load_config_file(path: str) -> dict:
    """key=value per line, '#' comments; unknown keys are rejected."""
    known = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise UsageError(f"{path}: line {lineno}: unknown config key {key!r}")
            out[key] = value
    return out


def build_pipeline_config(args, flag_map: dict) -> PipelineConfig:
    """Precedence: command line flags > config file > defaults (with
    DIARKIT_SEED standing in for the default seed)."""
    cfg = PipelineConfig()
    file_keys: dict = {}
    if getattr(args, "config", None):
        file_keys = load_config_file(args.config)
        for key, value in file_keys.items():
            caster = type(getattr(cfg, key))
            try:
                setattr(cfg, key, caster(value) if caster is not bool else value.lower() in ("1", "true", "yes"))
            except ValueError as exc:
                raise UsageError(f"config key {key}: cannot parse {value!r}") from exc
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, key, value)
    env_seed = os.environ.get("DIARKIT_SEED")
    if env_seed is not None and getattr(args, "seed", None) is None and "seed" not in file_keys:
        cfg.seed = int(env_seed)
    cfg.validate()
    return cfg


def _atomic_write(path: str, payload: str | bytes):
    mode = "wb" if isinstance(payload, bytes) else "w"
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-diarkit-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _heuristic_ns_mask(c0: np.ndarray, fraction: float = 0.15) -> np.ndarray:
    """Label the lowest-energy fraction of frames as non-speech, using the
    first cepstral coefficient as a frame energy proxy."""
    threshold = np.quantile(c0, fraction)
    return c0 > threshold


def extract_session_features(
    audio: audio_io.MultiStreamAudio,
    sad_segments: list[tuple] | None,
    cfg: PipelineConfig,
    net: dae.Network | None = None,
) -> tuple[FeatureMatrix, dae.Network | None]:
    """Feature stack shared by the subcommands: per-channel MFCC + CMVN,
    concatenation, then either splice + bottleneck network, or the raw
    concatenated features.

    Returns speech-only frames in oracle-SAD mode, or all frames with a
    speech mask attached in no-SAD mode (from the SAD file when given,
    otherwise from a low-energy heuristic).
    """
    mcfg = cfg.mfcc_config()
    raw = [features.mfcc(ch, audio.sample_rate, mcfg) for ch in audio.channels]
    if sad_segments is not None:
        mask = features.speech_frame_mask(raw[0], sad_segments)
    else:
        if cfg.mode != "no-sad":
            raise UsageError("oracle-sad mode requires a SAD segments file")
        c0 = np.mean([f.data[:, 0] for f in raw], axis=0)
        mask = _heuristic_ns_mask(c0)
    normalized = [features.cmvn(f, mask) for f in raw]
    combined = features.concat_streams(normalized)
    combined = dataclasses.replace(combined, speech_mask=mask)

    if cfg.feature_kind == "mfcc91":
        staged = combined
    else:
        staged = features.splice(combined, cfg.splice_left, cfg.splice_right)

    if cfg.mode == "no-sad":
        staged = dataclasses.replace(staged, speech_mask=mask, frame_index=np.arange(staged.n_frames))
    else:
        kept = np.where(mask)[0]
        staged = dataclasses.replace(
            staged,
            data=staged.data[kept],
            speech_mask=np.ones(len(kept), dtype=bool),
            frame_index=kept,
        )

    if cfg.feature_kind == "mfcc91":
        return staged, None

    if net is None:
        net = dae.pretrain_stack(
            staged,
            cfg.train_config(),
            seed=cfg.seed,
            hidden_dim=combined.dim,
            bottleneck_dim=cfg.bottleneck_dim,
        )
    return dae.bottleneck(net, staged), net


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    if not os.path.exists(args.script):
        raise UsageError(f"script file not found: {args.script}")
    with open(args.script, encoding="utf-8") as fh:
        script = audio_io.SessionScript.from_json(fh.read())
    seed = args.seed if args.seed is not None else int(os.environ.get("DIARKIT_SEED", 0))
    channels = args.channels
    delays = [args.max_delay_ms * c / max(1, channels - 1) for c in range(channels)]
    gains = [1.0 - 0.5 * c / max(1, channels - 1) for c in range(channels)]
    audio, reference = audio_io.synth_session(
        script, channels, delays, gains, noise_snr_db=args.snr_db, seed=seed, rate=args.rate
    )
    os.makedirs(args.out_dir, exist_ok=True)
    for c, chan in enumerate(audio.channels):
        audio_io.write_wav(os.path.join(args.out_dir, f"ch{c}.wav"), chan, audio.sample_rate)
    ref_path = os.path.join(args.out_dir, "ref.rttm")
    scoring.rttm_write(reference, ref_path, file_id=args.file_id)
    sad = audio_io.sad_from_script(script)
    audio_io.write_segments(os.path.join(args.out_dir, "sad.txt"), sad)
    print(f"wrote {audio.channel_count} channels, ref.rttm, sad.txt to {args.out_dir}")
    return 0


_DIARIZE_FLAGS = {
    "speakers": "n_speakers",
    "min_dur": "min_duration_sec",
    "initial_states": "initial_states",
    "components": "components_per_initial_segment",
    "features_kind": "feature_kind",
    "epochs": "epochs",
    "seed": "seed",
}


def cmd_diarize(args) -> int:
    for path in args.audio:
        if not os.path.exists(path):
            raise UsageError(f"audio file not found: {path}")
    if args.sad is None and not args.no_sad:
        raise UsageError("either --sad FILE or --no-sad is required")
    cfg = build_pipeline_config(args, _DIARIZE_FLAGS)
    if args.no_sad:
        cfg.mode = "no-sad"
    cfg.validate()

    audio = audio_io.load_session(args.audio, target_rate=cfg.sample_rate)
    sad_segments = audio_io.read_segments(args.sad) if args.sad else None

    net = None
    if args.dae_model and os.path.exists(args.dae_model):
        net = dae.load_network(args.dae_model)
    feats, net = extract_session_features(audio, sad_segments, cfg, net=net)
    if args.dae_model and net is not None and not os.path.exists(args.dae_model):
        dae.save_network(net, args.dae_model)

    hyp, meta = diarize(feats, cfg.diarizer_config())
    file_id = args.file_id or os.path.splitext(os.path.basename(args.out))[0]
    _atomic_write(args.out, scoring.rttm_format(hyp, file_id=file_id))
    meta_path = args.meta or (os.path.splitext(args.out)[0] + ".meta.jsonl")
    meta_record = dict(meta)
    meta_record["config"] = dataclasses.asdict(cfg)
    _atomic_write(meta_path, json.dumps(meta_record) + "\n")
    print(f"wrote {args.out} ({len(hyp.speakers)} speakers, stop: {meta['stop_reason']})")
    return 0


def cmd_score(args) -> int:
    for path in (args.ref, args.hyp):
        if not os.path.exists(path):
            raise UsageError(f"file not found: {path}")
    ref = scoring.rttm_read(args.ref)
    hyp = scoring.rttm_read(args.hyp)
    breakdown = scoring.score_der(ref, hyp, collar_sec=args.collar)
    print(breakdown.report())
    print(f"DER {breakdown.der:.4f}")
    if args.json:
        _atomic_write(args.json, breakdown.to_json() + "\n")
    return 0


def cmd_dominance(args) -> int:
    for path in (args.hyp, args.audio):
        if not os.path.exists(path):
            raise UsageError(f"file not found: {path}")
    hyp_segments = scoring.rttm_read(args.hyp)
    audio = audio_io.load_session([args.audio], target_rate=args.rate)
    from .segments import DiarizationHypothesis

    hyp = DiarizationHypothesis(hyp_segments)
    energies = wpe.segment_energy(audio.channels[0], hyp.segments, sample_rate=audio.sample_rate)
    report = dominance.dominance_report(
        hyp, energies, segment_len_sec=args.segment_len, session_duration_sec=audio.duration_sec
    )
    _atomic_write(args.out, report.to_csv())
    print(f"wrote {args.out} ({report.n_segments} windows x {len(report.speakers)} speakers)")
    return 0


def cmd_features(args) -> int:
    for path in args.audio:
        if not os.path.exists(path):
            raise UsageError(f"audio file not found: {path}")
    if args.sad is None and not args.no_sad:
        raise UsageError("either --sad FILE or --no-sad is required")
    cfg = build_pipeline_config(args, {"seed": "seed", "epochs": "epochs"})
    if args.no_sad:
        cfg.mode = "no-sad"
    if args.stage == "mfcc91":
        cfg.feature_kind = "mfcc91"
    audio = audio_io.load_session(args.audio, target_rate=cfg.sample_rate)
    sad_segments = audio_io.read_segments(args.sad) if args.sad else None
    feats, _ = extract_session_features(audio, sad_segments, cfg)
    features.write_features(args.out, feats)
    print(f"wrote {args.out}: {feats.n_frames} frames x {feats.dim} dims")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diarkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a scripted synthetic session")
    p.add_argument("script", help="session script (JSON)")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--channels", type=int, default=7)
    p.add_argument("--snr-db", type=float, default=15.0)
    p.add_argument("--max-delay-ms", type=float, default=5.0)
    p.add_argument("--rate", type=int, default=8000)
    p.add_argument("--file-id", default="session")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("diarize", help="run the full diarization pipeline")
    p.add_argument("audio", nargs="+", help="one mono WAV per channel (or one multi-channel WAV)")
    p.add_argument("--sad", default=None, help="speech activity segments file")
    p.add_argument("--no-sad", action="store_true", help="model non-speech as an extra state")
    p.add_argument("--speakers", type=int, default=None, help="number of speakers (side information)")
    p.add_argument("--min-dur", type=float, default=None, help="minimum turn duration in seconds")
    p.add_argument("--initial-states", type=int, default=None)
    p.add_argument("--components", type=int, default=None, help="GMM components per initial segment")
    p.add_argument("--features", dest="features_kind", choices=["bnf", "mfcc91"], default=None)
    p.add_argument("--epochs", type=int, default=None, help="training epochs per autoencoder layer")
    p.add_argument("--dae-model", default=None, help="reuse (or store) a trained network here")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--file-id", default=None)
    p.add_argument("--meta", default=None, help="metadata JSON-lines path")
    p.add_argument("--out", required=True, help="output RTTM path")
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("score", help="diarization error rate between two RTTM files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--json", default=None, help="also write the breakdown as JSON")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("dominance", help="per-speaker dominance scores from a hypothesis")
    p.add_argument("--hyp", required=True, help="hypothesis RTTM")
    p.add_argument("--audio", required=True, help="reference channel WAV")
    p.add_argument("--segment-len", type=float, default=300.0)
    p.add_argument("--rate", type=int, default=8000)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_dominance)

    p = sub.add_parser("features", help="dump staged features as flat binary")
    p.add_argument("audio", nargs="+")
    p.add_argument("--sad", default=None)
    p.add_argument("--no-sad", action="store_true")
    p.add_argument("--stage", choices=["bnf", "mfcc91"], default="bnf")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # module-level runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
