"""Convert the 5000-image MNIST sample bundled with mlxtend into IDX files.

Usage: python tools/make_mnist5k_fixture.py path/to/mnist_5k.csv.gz tests/data

The CSV rows hold 784 pixel values followed by the label.
"""
import gzip
import struct
import sys
from pathlib import Path

import numpy as np


def main(src, out_dir):
    rows = np.loadtxt(gzip.open(src, "rt"), delimiter=",", dtype=np.int64)
    pixels = rows[:, :-1].astype(np.uint8)
    labels = rows[:, -1].astype(np.uint8)
    out = Path(out_dir)
    with gzip.GzipFile(out / "mnist5k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(pixels), 28, 28))
        f.write(pixels.tobytes())
    with gzip.GzipFile(out / "mnist5k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(labels)} images to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
