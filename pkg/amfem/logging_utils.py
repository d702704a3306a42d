# --------------------------------------------------
# logging_utils.py
# --------------------------------------------------
# Package-wide structured JSON logging.
#
#   - Every log entry is one JSON object per line
#   - Includes timestamp and level, plus the dict passed
#     as the message (iteration records, solve diagnostics)
#   - Non-finite floats are written as strings so every
#     line stays valid JSON
# --------------------------------------------------

import json
import logging
import math
import sys
from datetime import datetime, timezone


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if hasattr(value, "item") and getattr(value, "ndim", None) == 0:
        return _jsonable(value.item())
    return value


class JSONFormatter(logging.Formatter):
    """
    Formats each record as a single JSON line.
    If record.msg is already a dict, it is embedded directly;
    otherwise record.getMessage() goes into a "msg" field.
    """

    def format(self, record):
        if isinstance(record.msg, dict):
            payload = {k: _jsonable(v) for k, v in record.msg.items()}
        else:
            payload = {"msg": record.getMessage()}

        base = {
            "ts": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
        }
        base.update(payload)

        if record.exc_info:
            base["exc"] = self.formatException(record.exc_info)

        return json.dumps(base, default=str)


def setup_logging(level: str = "WARNING", stream=None):
    """
    Configure the root logger to emit JSON lines only.
      - Existing handlers are dropped to avoid duplicates
      - Defaults to stderr: stdout is reserved for CLI results
    """
    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.setFormatter(JSONFormatter())

    root = logging.getLogger()
    root.handlers = []
    root.addHandler(handler)
    root.setLevel(level.upper() if isinstance(level, str) else level)
