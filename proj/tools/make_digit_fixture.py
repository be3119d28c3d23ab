#!/usr/bin/env python3
"""Builds the bundled desk-scale digit fixture under data/.

The source is the 5000-image MNIST subset shipped inside the mlxtend wheel
(500 images per class, 28x28, 0..255). The images are written unchanged as
gzip-compressed IDX files:

    python3 -m pip download mlxtend --no-deps -d /tmp/mlx
    python3 -m zipfile -e /tmp/mlx/mlxtend-*.whl /tmp/mlx
    python3 tools/make_digit_fixture.py /tmp/mlx/mlxtend/data/data/mnist_5k.csv.gz data
"""
import gzip
import struct
import sys

import numpy as np


def main(src, out_dir):
    table = np.genfromtxt(src, delimiter=",")
    images = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    n = images.shape[0]
    with gzip.GzipFile(f"{out_dir}/digits5k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(f"{out_dir}/digits5k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
