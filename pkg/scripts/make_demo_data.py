#!/usr/bin/env python3
"""Synthesize a small RAVDESS-style demo corpus of tone clips.

Creates N wav files per emotion class (default 6) with class-coded tone
frequencies plus noise, named per the RAVDESS convention, and a manifest CSV.
Lets the full CLI workflow (split/extract/train/eval/stream) run without the
real corpora.

    python scripts/make_demo_data.py --out demo_corpus --per-class 6
"""

import argparse
import os
import sys

import numpy as np

from emorec import audio_io, dataset


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_corpus")
    parser.add_argument("--per-class", type=int, default=6)
    parser.add_argument("--sample-rate", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    wav_dir = os.path.join(args.out, "wavs")
    os.makedirs(wav_dir, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    for emotion in range(1, 9):
        freq = 250.0 + 150.0 * (emotion - 1)
        for actor in range(1, args.per_class + 1):
            duration = 1.0 + 0.01 * actor
            clip = audio_io.synth_tone(freq, duration, args.sample_rate, 0.6)
            noisy = clip.samples + 0.02 * rng.standard_normal(len(clip))
            clip = audio_io.AudioClip(noisy, args.sample_rate)
            name = f"03-01-{emotion:02d}-01-01-01-{actor:02d}.wav"
            data, _ = audio_io.encode_wav(clip)
            with open(os.path.join(wav_dir, name), "wb") as fh:
                fh.write(data)

    records = dataset.scan_corpus(wav_dir, "ravdess")
    manifest = os.path.join(args.out, "manifest.csv")
    dataset.write_manifest(manifest, records)
    print(f"wrote {len(records)} clips under {wav_dir}")
    print(f"manifest -> {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
