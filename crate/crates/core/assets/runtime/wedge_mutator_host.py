"""Runs a Python mutator module behind the length-prefixed plugin protocol.

usage: wedge_mutator_host.py <mutator.py>

The module must define fuzz(buf, add_buf, max_size) and may define
init(seed). The host reseeds `random` with the request's rng_seed before
every call, so identical requests produce identical responses.
"""

import importlib.util
import random
import struct
import sys

REQUEST = 0x01
RESPONSE = 0x81
SHUTDOWN = 0x7F


def read_exact(stream, n):
    data = b""
    while len(data) < n:
        chunk = stream.read(n - len(data))
        if not chunk:
            return None
        data += chunk
    return data


def main():
    spec = importlib.util.spec_from_file_location("wedge_plugin", sys.argv[1])
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    if not hasattr(module, "fuzz"):
        sys.stderr.write("mutator module defines no fuzz(buf, add_buf, max_size)\n")
        sys.exit(3)

    inp = sys.stdin.buffer
    out = sys.stdout.buffer
    # Stray prints from the plugin must not corrupt the protocol stream.
    sys.stdout = sys.stderr

    if hasattr(module, "init"):
        module.init(0)

    while True:
        header = read_exact(inp, 4)
        if header is None:
            return
        (length,) = struct.unpack("<I", header)
        body = read_exact(inp, length)
        if body is None or not body:
            return
        tag = body[0]
        if tag == SHUTDOWN:
            return
        if tag != REQUEST:
            sys.stderr.write("unexpected tag 0x%02x\n" % tag)
            sys.exit(2)
        rng_seed, max_size, seed_len = struct.unpack_from("<QII", body, 1)
        off = 17
        seed = body[off:off + seed_len]
        off += seed_len
        (add_len,) = struct.unpack_from("<I", body, off)
        off += 4
        add = body[off:off + add_len]

        random.seed(rng_seed)
        result = bytes(module.fuzz(bytearray(seed), bytearray(add), max_size))
        out.write(struct.pack("<IB", len(result) + 1, RESPONSE) + result)
        out.flush()


if __name__ == "__main__":
    main()
