#!/usr/bin/env python3
"""Write the bundled 5000-example MNIST subset as IDX files.

The source is mnist_5k.csv.gz shipped inside the mlxtend wheel (500 digits
per class, 784 pixel columns followed by the label). Rows are interleaved
with a fixed permutation so any prefix is roughly class balanced.
"""
import argparse
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np


def load_rows(wheel: pathlib.Path) -> np.ndarray:
    with zipfile.ZipFile(wheel) as zf:
        raw = zf.read("mlxtend/data/data/mnist_5k.csv.gz")
    return np.loadtxt(io.StringIO(gzip.decompress(raw).decode()), delimiter=",")


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", type=pathlib.Path)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data"))
    args = ap.parse_args()

    wheel = args.wheel
    if wheel is None:
        tmp = pathlib.Path(tempfile.mkdtemp())
        subprocess.check_call([sys.executable, "-m", "pip", "download", "mlxtend==0.24.0",
                               "--no-deps", "-d", str(tmp)])
        wheel = next(tmp.glob("mlxtend-*.whl"))

    rows = load_rows(wheel)
    perm = np.random.RandomState(20240521).permutation(rows.shape[0])
    rows = rows[perm]
    images = rows[:, :784].astype(np.uint8)
    labels = rows[:, 784].astype(np.uint8)
    n = rows.shape[0]

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "mnist5k-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.tobytes())
    with open(args.out / "mnist5k-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())
    print(f"wrote {n} examples to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
