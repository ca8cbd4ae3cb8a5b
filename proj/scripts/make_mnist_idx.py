#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package into IDX files.

The npm package (MIT, Juan Cazala) bundles 10,000 MNIST digits as per-class JSON
arrays of 784 floats in [0,1] with three decimals. This script rescales them to
bytes, shuffles with a fixed seed and writes an 8,000 / 2,000 train/test split
in the standard big-endian IDX layout.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_idx.py package/src/digits data/mnist
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_COUNT = 8000
SEED = 20201


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    items = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        for i in range(len(data) // 784):
            px = data[i * 784:(i + 1) * 784]
            items.append(([min(255, max(0, int(round(v * 255)))) for v in px], digit))
    random.Random(SEED).shuffle(items)
    train, test = items[:TRAIN_COUNT], items[TRAIN_COUNT:]
    write_images(dst / "train-images-idx3-ubyte", [x for x, _ in train])
    write_labels(dst / "train-labels-idx1-ubyte", [y for _, y in train])
    write_images(dst / "test-images-idx3-ubyte", [x for x, _ in test])
    write_labels(dst / "test-labels-idx1-ubyte", [y for _, y in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {dst}")


if __name__ == "__main__":
    main()
