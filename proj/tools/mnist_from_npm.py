#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package ships 10000 MNIST digits as per-class JSON arrays of pixel
intensities divided by 255 and rounded to three decimals, which is enough
precision to recover the original uint8 rasters exactly.

usage: mnist_from_npm.py <package_dir> <out_dir> [--seed N]
Writes <out_dir>/pool-images-idx3-ubyte and pool-labels-idx1-ubyte.
"""
import argparse
import json
import pathlib
import random
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    digits = pathlib.Path(args.package_dir) / "src" / "digits"
    images, labels = [], []
    for label in range(10):
        data = json.loads((digits / f"{label}.json").read_text())["data"]
        if len(data) % 784:
            raise SystemExit(f"{label}.json: length {len(data)} not a multiple of 784")
        for i in range(0, len(data), 784):
            raster = bytes(min(255, max(0, round(v * 255))) for v in data[i:i + 784])
            images.append(raster)
            labels.append(label)

    order = list(range(len(images)))
    random.Random(args.seed).shuffle(order)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pool-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(order), 28, 28))
        for i in order:
            f.write(images[i])
    with open(out / "pool-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(order)))
        f.write(bytes(labels[i] for i in order))
    print(f"wrote {len(order)} samples to {out}")


if __name__ == "__main__":
    main()
