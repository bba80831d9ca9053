#!/usr/bin/env python3
"""Convert the digit JSON files shipped by the `mnist` npm package into IDX files.

The package stores each digit class as a flat list of pixel intensities
rounded to three decimals (byte / 255), so the original bytes are recovered
exactly with round(value * 255).

Usage: mnist_json_to_idx.py <package/src/digits> <out_dir> [--test 1000] [--seed 0]
"""
import argparse
import json
import random
import struct
from pathlib import Path

SIDE = 28


def load_samples(digits_dir):
    samples = []
    for digit in range(10):
        data = json.loads((Path(digits_dir) / f"{digit}.json").read_text())["data"]
        n = len(data) // (SIDE * SIDE)
        for k in range(n):
            chunk = data[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            pixels = bytes(int(round(v * 255)) for v in chunk)
            assert all(abs(p / 255 - v) < 1e-3 for p, v in zip(pixels, chunk))
            samples.append((pixels, digit))
    return samples


def write_idx(out_dir, prefix, samples):
    with open(out_dir / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(samples), SIDE, SIDE))
        for pixels, _ in samples:
            f.write(pixels)
    with open(out_dir / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = load_samples(args.digits_dir)
    random.Random(args.seed).shuffle(samples)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out, "t10k", samples[:args.test])
    write_idx(out, "train", samples[args.test:])
    print(f"train={len(samples) - args.test} test={args.test} -> {out}")


if __name__ == "__main__":
    main()
