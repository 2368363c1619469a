#!/usr/bin/env python3
"""Regenerates crates/core/data/color_names.bin.

Two opponent-color channels over a 32x32x32 RGB quantization, evaluated at
bin centers and stored as signed bytes (value = byte / 254):

    c0 = (r - b) / 2              warm vs. cool
    c1 = (2g - r - b) / 4         green vs. magenta

Gray inputs (r = g = b) map to (0, 0).
"""
import struct
import sys
from pathlib import Path

BINS = 32


def main(out: Path) -> None:
    body = bytearray()
    for ri in range(BINS):
        for gi in range(BINS):
            for bi in range(BINS):
                r, g, b = ((i + 0.5) / BINS for i in (ri, gi, bi))
                for v in ((r - b) / 2.0, (2.0 * g - r - b) / 4.0):
                    q = max(-127, min(127, round(v * 254.0)))
                    body += struct.pack("b", q)
    header = b"FTCN" + bytes([1, BINS, 2, 0])
    out.write_bytes(header + bytes(body))


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "crates/core/data/color_names.bin"
    main(target)
