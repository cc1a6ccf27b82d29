"""Standalone frame decoder, run as a subprocess.

Usage: python -m catchrelease.framedec INPUT T1,T2,... OUTDIR

Writes one PNG per requested timestamp to OUTDIR, named 000000.png,
000001.png, ... in argument order, and prints the count written. This is the
reference implementation behind the configurable decoder command; any tool
with the same contract can replace it.
"""

from __future__ import annotations

import sys
from pathlib import Path

import cv2

from .media import decode_frames


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 3:
        print("usage: framedec INPUT T1,T2,... OUTDIR", file=sys.stderr)
        return 2
    input_path, stamp_arg, outdir = args
    times = [float(t) for t in stamp_arg.split(",") if t.strip()]
    if times != sorted(times):
        print("timestamps must be ascending", file=sys.stderr)
        return 2
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    images = decode_frames(input_path, times)
    written = 0
    for k, image in enumerate(images):
        if image is None:
            print(f"no frame at {times[k]}", file=sys.stderr)
            return 1
        cv2.imwrite(str(out / f"{k:06d}.png"), image)
        written += 1
    print(written)
    return 0


if __name__ == "__main__":
    sys.exit(main())
