"""Build a small IDX-format MNIST subset from the `mnist` npm package.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset 150

Writes <out>/train-images-idx3-ubyte and <out>/train-labels-idx1-ubyte with
`per_class` images per digit, interleaved by class so any prefix is balanced.
"""
import json
import os
import struct
import sys


def main():
    src, out, per_class = sys.argv[1], sys.argv[2], int(sys.argv[3])
    digits = []
    for d in range(10):
        with open(os.path.join(src, f"{d}.json")) as fh:
            flat = json.load(fh)["data"]
        digits.append([flat[i * 784:(i + 1) * 784] for i in range(per_class)])
    images, labels = [], []
    for i in range(per_class):
        for d in range(10):
            images.append(bytes(min(255, max(0, round(v * 255))) for v in digits[d][i]))
            labels.append(d)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "train-images-idx3-ubyte"), "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            fh.write(img)
    with open(os.path.join(out, "train-labels-idx1-ubyte"), "wb") as fh:
        fh.write(struct.pack(">II", 0x801, len(labels)))
        fh.write(bytes(labels))


if __name__ == "__main__":
    main()
