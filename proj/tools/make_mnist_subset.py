#!/usr/bin/env python3
"""Convert the 5,000-image MNIST sample bundled with mlxtend into gzipped IDX files.

The CSV has one image per row: 784 pixel values (0..255, row-major 28x28)
followed by the digit label.

    python tools/make_mnist_subset.py --csv mnist_5k.csv.gz --out data/mnist5k

Without --csv the file is taken from an installed mlxtend package.
"""
import argparse
import gzip
import os
import struct


def find_mlxtend_csv():
    import mlxtend.data

    return os.path.join(os.path.dirname(mlxtend.data.__file__), "data", "mnist_5k.csv.gz")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--csv", help="path to mnist_5k.csv.gz")
    ap.add_argument("--out", default="data/mnist5k")
    args = ap.parse_args()

    path = args.csv or find_mlxtend_csv()
    opener = gzip.open if path.endswith(".gz") else open
    pixels = bytearray()
    labels = bytearray()
    with opener(path, "rt") as f:
        for line in f:
            fields = [int(float(v)) for v in line.strip().split(",")]
            if len(fields) != 785:
                raise SystemExit(f"unexpected row width {len(fields)}")
            pixels.extend(fields[:784])
            labels.append(fields[784])

    n = len(labels)
    os.makedirs(args.out, exist_ok=True)
    # mtime=0 keeps the archives byte-reproducible.
    img_path = os.path.join(args.out, "images-idx3-ubyte.gz")
    with open(img_path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(bytes(pixels))
    lbl_path = os.path.join(args.out, "labels-idx1-ubyte.gz")
    with open(lbl_path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(f"wrote {n} images to {args.out}")


if __name__ == "__main__":
    main()
