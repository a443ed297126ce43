"""Per-line hit counter for a single Python script.

usage: python3 wedge_linetrace.py <script> [args...]
Counts are written as JSON {"<line>": hits} to $WEDGE_LINE_PROFILE_OUT.
"""
import json
import os
import runpy
import sys

target = os.path.abspath(sys.argv[1])
counts = {}


def _tracer(frame, event, arg):
    if frame.f_code.co_filename != target:
        return None
    if event == "line":
        counts[frame.f_lineno] = counts.get(frame.f_lineno, 0) + 1
    return _tracer


def _dump():
    out = os.environ.get("WEDGE_LINE_PROFILE_OUT")
    if not out:
        return
    with open(out, "w") as f:
        json.dump({str(k): v for k, v in sorted(counts.items())}, f)


sys.argv = sys.argv[1:]
sys.settrace(_tracer)
try:
    runpy.run_path(target, run_name="__main__")
finally:
    sys.settrace(None)
    _dump()
