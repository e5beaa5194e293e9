"""Regenerates the golden frame fixtures with nothing but the struct module."""

import pathlib
import struct

OUT = pathlib.Path(__file__).parent / "frames"


def header(msg_type, rows, cols):
    return b"DICE" + struct.pack("<BBII", 1, msg_type, rows, cols)


def floats(values):
    return struct.pack("<%df" % len(values), *values)


def bitmap(observed):
    out = bytearray((len(observed) + 7) // 8)
    for i, bit in enumerate(observed):
        if bit:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


FRAMES = {
    "hello.bin": header(0, 0, 0),
    "image_request_2x3.bin": header(1, 2, 3) + floats([0.0, 1.0, -2.5, 0.125, 1e-3, 3.0e38]),
    "sinogram_request_10x2.bin": header(2, 10, 2)
    + bitmap([1, 1, 0, 1, 0, 0, 0, 0, 1, 0])
    + floats([float(i) * 0.5 for i in range(20)]),
    "response_1x4.bin": header(3, 1, 4) + floats([1.5, -0.0, 2.0 ** -20, 65504.0]),
    "error.bin": header(4, 1, 9) + "bad input".encode("utf-8"),
}

if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    for name, data in FRAMES.items():
        (OUT / name).write_bytes(data)
