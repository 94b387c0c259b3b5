#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Pack a sequence of face-crop images into a .facestream container.

The engine deliberately carries no image/video codecs; this helper turns a
directory of per-frame face crops into its input format. Accepted inputs are
binary PGM (P5, 8-bit) and binary PPM (P6, 8-bit; converted to grayscale with
BT.601 luma). Frames are taken in sorted filename order and every frame must
share one resolution.

Layout written: magic "FSTR", u32 version=1, u32 n_frames, u16 height,
u16 width, then n_frames*height*width uint8 grayscale pixels, row-major,
little-endian throughout.

Usage:
    facestream_from_images.py --out faces.facestream frame_*.pgm
    facestream_from_images.py --out faces.facestream --dir crops/
"""

import argparse
import pathlib
import struct
import sys


def read_pnm(path):
    data = path.read_bytes()

    def token(pos):
        while True:
            while pos < len(data) and data[pos : pos + 1].isspace():
                pos += 1
            if pos < len(data) and data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        return data[start:pos], pos

    magic, pos = token(0)
    if magic not in (b"P5", b"P6"):
        raise SystemExit(f"{path}: only binary PGM (P5) / PPM (P6) supported")
    width_b, pos = token(pos)
    height_b, pos = token(pos)
    maxval_b, pos = token(pos)
    width, height, maxval = int(width_b), int(height_b), int(maxval_b)
    if maxval != 255:
        raise SystemExit(f"{path}: only 8-bit images supported")
    pos += 1  # single whitespace after maxval
    if magic == b"P5":
        pixels = data[pos : pos + width * height]
        if len(pixels) != width * height:
            raise SystemExit(f"{path}: truncated pixel data")
        return height, width, bytes(pixels)
    rgb = data[pos : pos + 3 * width * height]
    if len(rgb) != 3 * width * height:
        raise SystemExit(f"{path}: truncated pixel data")
    # ITU-R BT.601 luma
    gray = bytearray(width * height)
    for i in range(width * height):
        r, g, b = rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]
        gray[i] = min(255, round(0.299 * r + 0.587 * g + 0.114 * b))
    return height, width, bytes(gray)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("images", nargs="*", help="image files (sorted order)")
    ap.add_argument("--dir", help="take every .pgm/.ppm under this directory")
    ap.add_argument("--out", required=True, help="output .facestream path")
    args = ap.parse_args()

    paths = [pathlib.Path(p) for p in args.images]
    if args.dir:
        base = pathlib.Path(args.dir)
        paths += [p for p in base.iterdir() if p.suffix in (".pgm", ".ppm")]
    paths.sort()
    if not paths:
        ap.error("no input images")

    frames = [read_pnm(p) for p in paths]
    h, w = frames[0][0], frames[0][1]
    for path, (fh, fw, _) in zip(paths, frames):
        if (fh, fw) != (h, w):
            raise SystemExit(f"{path}: size {fw}x{fh} differs from {w}x{h}")

    with open(args.out, "wb") as f:
        f.write(b"FSTR")
        f.write(struct.pack("<IIHH", 1, len(frames), h, w))
        for _, _, pixels in frames:
            f.write(pixels)
    print(f"wrote {len(frames)} frames of {w}x{h} to {args.out}")


if __name__ == "__main__":
    sys.exit(main())
