"""Mock detector adapter: bright-region finder behind the wire protocol.

Usage: python -m shadowpipe.adapters.mock
Reads request lines on stdin, answers one response line per request.
"""

from __future__ import annotations

import json
import sys

from ..detect import mock_detect
from ..raster import load_image


def main() -> int:
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        image = load_image(request["path"])
        boxes = [
            {
                "x": d.region.x, "y": d.region.y,
                "w": d.region.w, "h": d.region.h,
                "probs": d.class_probs,
            }
            for d in mock_detect(image)
        ]
        sys.stdout.write(json.dumps({"id": request["id"], "boxes": boxes}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
