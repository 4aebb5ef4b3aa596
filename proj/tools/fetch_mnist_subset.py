#!/usr/bin/env python3
"""Write a 5,000-digit MNIST subset as standard gzip'd IDX files.

The digits come from the ``mnist_5k.csv.gz`` table bundled in the mlxtend
wheel (500 real MNIST digits per class), which is reachable through an
ordinary package index when the canonical MNIST mirrors are not. The rows
are shuffled with a fixed seed and split 4,000 / 1,000 into the usual
``train-*`` / ``t10k-*`` file names, so a full MNIST download can be dropped
into the same directory without any code change.
"""

import argparse
import glob
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np


def locate_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp(prefix="mlxtend-")
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "mlxtend==0.24.0", "-d", tmp],
        check=True,
    )
    return glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]


def write_idx(path, array):
    if array.ndim == 3:
        header = struct.pack(">IIII", 0x00000803, *array.shape)
    else:
        header = struct.pack(">II", 0x00000801, array.shape[0])
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header)
        f.write(array.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--wheel", help="path to an already-downloaded mlxtend wheel")
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    parser.add_argument("--test-size", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20240601)
    args = parser.parse_args()

    with zipfile.ZipFile(locate_wheel(args.wheel)) as wheel:
        raw = gzip.decompress(wheel.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1]

    order = np.random.default_rng(args.seed).permutation(len(labels))
    test_idx, train_idx = order[: args.test_size], order[args.test_size :]

    os.makedirs(args.out, exist_ok=True)
    write_idx(os.path.join(args.out, "train-images-idx3-ubyte.gz"), images[train_idx])
    write_idx(os.path.join(args.out, "train-labels-idx1-ubyte.gz"), labels[train_idx])
    write_idx(os.path.join(args.out, "t10k-images-idx3-ubyte.gz"), images[test_idx])
    write_idx(os.path.join(args.out, "t10k-labels-idx1-ubyte.gz"), labels[test_idx])
    print(f"wrote {len(train_idx)} train / {len(test_idx)} test digits to {os.path.abspath(args.out)}")


if __name__ == "__main__":
    main()
