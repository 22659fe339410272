#!/usr/bin/env python3
"""Build a 10k-digit MNIST subset in IDX format from the `mnist` npm package.

The npm package ships 10,000 genuine 28x28 MNIST digits as JSON arrays of
grey levels in [0, 1] (rounded to three decimals). This script re-quantizes
them to bytes, shuffles with a fixed seed, and writes gzip-compressed IDX
files: 9,000 training digits and 1,000 test digits.

Usage: scripts/fetch_mnist_subset.py [OUT_DIR]   (default: data/mnist)
For full-size runs, drop the official MNIST files into any directory and
point --mnist-dir at it instead.
"""
import gzip
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

SIDE = 28
N_TEST = 1000


def write_idx_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "mnist")
    os.makedirs(out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        samples = []
        for digit in range(10):
            with open(os.path.join(tmp, "package", "src", "digits", f"{digit}.json")) as f:
                raw = json.load(f)["data"]
            px = SIDE * SIDE
            for k in range(len(raw) // px):
                img = [min(255, max(0, round(v * 255))) for v in raw[k * px:(k + 1) * px]]
                samples.append((img, digit))
    random.Random(20240101).shuffle(samples)
    test, train = samples[:N_TEST], samples[N_TEST:]
    write_idx_images(os.path.join(out, "train-images-idx3-ubyte.gz"), [s[0] for s in train])
    write_idx_labels(os.path.join(out, "train-labels-idx1-ubyte.gz"), [s[1] for s in train])
    write_idx_images(os.path.join(out, "t10k-images-idx3-ubyte.gz"), [s[0] for s in test])
    write_idx_labels(os.path.join(out, "t10k-labels-idx1-ubyte.gz"), [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {out}")


if __name__ == "__main__":
    main()
