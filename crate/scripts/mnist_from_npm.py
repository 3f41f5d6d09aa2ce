#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import json
import struct
import sys
from pathlib import Path

SIDE = 28


def main(src: Path, out: Path) -> None:
    images = bytearray()
    labels = bytearray()
    count = 0
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        n = len(raw) // (SIDE * SIDE)
        for v in raw[: n * SIDE * SIDE]:
            images.append(max(0, min(255, round(v * 255))))
        labels.extend([digit] * n)
        count += n
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, SIDE, SIDE))
        f.write(images)
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels)
    print(f"wrote {count} samples to {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
