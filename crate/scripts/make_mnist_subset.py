#!/usr/bin/env python3
"""Build the desk-scale MNIST subset used by the acceptance suite.

Source: the 10,000 MNIST digits bundled with the `mnist` npm package
(`npm pack mnist`, version 1.1.0), stored as pixel/255 rounded to three
decimals. Rounding is invertible, so the original bytes are recovered with
round(v * 255). Output is gzip-compressed IDX (train 5000 / test 1000).

usage: make_mnist_subset.py <package/src/digits> <out_dir>
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SEED = 2019
N_TRAIN, N_TEST = 5000, 1000


def write_gz(path, payload):
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(payload)


def main(src, out):
    samples = []
    for digit in range(10):
        data = json.loads(Path(src, f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            pix = bytes(round(v * 255) for v in data[i * 784:(i + 1) * 784])
            samples.append((digit, pix))
    random.Random(SEED).shuffle(samples)
    splits = {"train": samples[:N_TRAIN], "t10k": samples[N_TRAIN:N_TRAIN + N_TEST]}
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, rows in splits.items():
        n = len(rows)
        images = struct.pack(">IIII", 0x803, n, 28, 28) + b"".join(p for _, p in rows)
        labels = struct.pack(">II", 0x801, n) + bytes(d for d, _ in rows)
        write_gz(out / f"{prefix}-images-idx3-ubyte.gz", images)
        write_gz(out / f"{prefix}-labels-idx1-ubyte.gz", labels)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
