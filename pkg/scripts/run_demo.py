#!/usr/bin/env python3
"""End-to-end demo: synthesize a 4-speaker session, diarize it, score the
result, and compute dominance scores.

Usage: python scripts/run_demo.py [workdir]
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from diarkit import audio_io, cli


def main():
    workdir = sys.argv[1] if len(sys.argv) > 1 else "demo_session"
    os.makedirs(workdir, exist_ok=True)

    script = audio_io.demo_script(4, 300.0, seed=21, turn_range=(2.0, 6.0), gap_range=(0.3, 0.8))
    script_path = os.path.join(workdir, "session.json")
    with open(script_path, "w") as fh:
        fh.write(script.to_json())

    audio_dir = os.path.join(workdir, "audio")
    print("== synth ==")
    rc = cli.main(["synth", script_path, audio_dir, "--channels", "7", "--snr-db", "15", "--seed", "7"])
    if rc:
        return rc

    wavs = [os.path.join(audio_dir, f"ch{c}.wav") for c in range(7)]
    hyp = os.path.join(workdir, "hyp.rttm")
    print("== diarize (bottleneck features, oracle SAD) ==")
    rc = cli.main(
        [
            "diarize",
            *wavs,
            "--sad",
            os.path.join(audio_dir, "sad.txt"),
            "--speakers",
            "4",
            "--min-dur",
            "0.5",
            "--seed",
            "3",
            "--out",
            hyp,
        ]
    )
    if rc:
        return rc

    print("== score ==")
    rc = cli.main(["score", "--ref", os.path.join(audio_dir, "ref.rttm"), "--hyp", hyp])
    if rc:
        return rc

    print("== dominance ==")
    csv = os.path.join(workdir, "dominance.csv")
    rc = cli.main(["dominance", "--hyp", hyp, "--audio", os.path.join(audio_dir, "ch0.wav"), "--out", csv])
    if rc:
        return rc
    print(f"\nAll outputs in {workdir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
