#!/usr/bin/env python3
"""Rebuild data/mnist5k.tar.gz from the 5,000-image MNIST sample shipped with mlxtend.

Usage: pip install mlxtend && python3 tools/make_mnist5k.py [output.tar.gz]
"""

import argparse
import io
import struct
import tarfile

import numpy as np
from mlxtend.data import mnist_data


def idx_images(x: np.ndarray) -> bytes:
    return struct.pack(">IIII", 0x803, len(x), 28, 28) + x.astype(np.uint8).tobytes()


def idx_labels(y: np.ndarray) -> bytes:
    return struct.pack(">II", 0x801, len(y)) + y.astype(np.uint8).tobytes()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("output", nargs="?", default="data/mnist5k.tar.gz")
    args = ap.parse_args()

    x, y = mnist_data()
    members = [
        ("mnist5k-images-idx3-ubyte", idx_images(x)),
        ("mnist5k-labels-idx1-ubyte", idx_labels(y)),
    ]
    with tarfile.open(args.output, "w:gz") as tar:
        for name, payload in members:
            info = tarfile.TarInfo(name)
            info.size = len(payload)
            info.mtime = 0
            tar.addfile(info, io.BytesIO(payload))
    print(f"{args.output}: {len(y)} images, class counts {np.bincount(y.astype(int)).tolist()}")


if __name__ == "__main__":
    main()
