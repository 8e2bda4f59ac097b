"""Replay one witness manifest in a fresh interpreter.

Run as ``python -O -m microfuzz.replay MANIFEST`` with ``MICROFUZZ_HOOKS=0``.
Protocol on stdout, one line each, flushed:

    READY <seconds since interpreter start>
    ARGS <canonical JSON of the decoded arguments>
    START <process CPU seconds>
    DONE | THREW <error>

``ERROR <reason>`` replaces the remaining lines when the manifest cannot be
replayed. Exit codes: 0 done, 3 bad manifest, 4 bad arguments, 5 target raised.
"""
from __future__ import annotations

import json
import sys
import time

MANIFEST_VERSION = 1


def _say(*parts):
    sys.stdout.write(" ".join(str(p) for p in parts) + "\n")
    sys.stdout.flush()


def main(argv=None) -> int:
    t_boot = time.perf_counter()
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        _say("ERROR usage: replay MANIFEST")
        return 3
    try:
        with open(argv[0], encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        _say("ERROR unreadable manifest:", e)
        return 3
    if manifest.get("version") != MANIFEST_VERSION:
        _say("ERROR manifest version", manifest.get("version"), "!=", MANIFEST_VERSION)
        return 3

    from .errors import ConfigurationError, HarnessError
    from .registry import load_registry
    from .values import DecodeError, ConformanceError, DescriptorError, dumps, from_json, to_json

    try:
        registry = load_registry(manifest["registry"])
        entry = registry[manifest["target"]]
        if len(manifest["args"]) != len(entry.params):
            raise DecodeError("arity mismatch")
        args = [from_json(a, p, registry.descriptors)
                for a, p in zip(manifest["args"], entry.params)]
        host = entry.materialize(args)
    except (ConfigurationError, HarnessError, KeyError, DecodeError, ConformanceError,
            DescriptorError) as e:
        _say("ERROR cannot decode arguments:", e)
        return 4
    except Exception as e:
        _say("ERROR argument constructor raised:", f"{type(e).__name__}: {e}")
        return 4

    _say("READY", f"{time.perf_counter() - t_boot:.6f}")
    _say("ARGS", dumps([to_json(a) for a in args]))
    _say("START", f"{time.process_time():.9f}")
    try:
        entry.fn(*host)
    except Exception as e:
        _say("THREW", f"{type(e).__name__}: {e}"[:200])
        return 5
    _say("DONE")
    return 0


if __name__ == "__main__":
    sys.exit(main())
