"""Loopback adapter: echoes boxes from a fixture file, for round-trip tests.

Usage: python -m shadowpipe.adapters.loopback <fixture.json>
The fixture maps request id -> list of boxes in wire format. Unknown ids get
an empty box list.
"""

from __future__ import annotations

import json
import sys


def main(argv: list[str]) -> int:
    if len(argv) != 2:
        print("usage: loopback <fixture.json>", file=sys.stderr)
        return 2
    with open(argv[1], "r", encoding="utf-8") as fh:
        fixture = json.load(fh)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        boxes = fixture.get(request["id"], [])
        sys.stdout.write(json.dumps({"id": request["id"], "boxes": boxes}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
