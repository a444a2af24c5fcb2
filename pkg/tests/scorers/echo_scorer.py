#!/usr/bin/env python3
"""Test double for the stdio scoring protocol.

Modes (first CLI arg):
  fixed      -> always answer [1,0,0,0,0,0]
  badsum     -> answer probabilities summing to 0.8
  meanscore  -> probability mass on Structured proportional to the image mean
  error      -> answer an error message for every request
  crash      -> exit immediately after the first request
"""

import base64
import json
import struct
import sys


def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "fixed"
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        rid = req["id"]
        if mode == "crash":
            sys.exit(1)
        if mode == "error":
            emit({"id": rid, "error": "scorer refuses"})
            continue
        if mode == "badsum":
            emit({"id": rid, "probs": [0.3, 0.1, 0.1, 0.1, 0.1, 0.1]})
            continue
        if mode == "meanscore":
            raw = base64.b64decode(req["data"])
            n = len(raw) // 4
            values = struct.unpack(f"<{n}f", raw)
            mean = sum(values) / n
            p0 = max(0.0, min(1.0, mean))
            rest = (1.0 - p0) / 5.0
            emit({"id": rid, "probs": [p0] + [rest] * 5})
            continue
        emit({"id": rid, "probs": [1, 0, 0, 0, 0, 0]})


if __name__ == "__main__":
    main()
