#!/usr/bin/env python3
"""Run every applicable CLI command on the bundled scenarios.

Writes reports under --outdir (default ./fixture_reports) and prints one
line per (scenario, command) with the exit status.
"""

import argparse
import sys
import time
from pathlib import Path

from geocon.cli import main as geocon_main

JOBS = {
    "martinet.json": ["bracket", "flow", "cone", "pca", "extremal", "audit"],
    "heisenberg.json": ["bracket", "flow", "cone", "pca"],
    "flat_connection.json": ["flow", "pca", "mech-check"],
    "polar_connection.json": ["flow", "pca", "mech-check"],
}
EXTRA_ARGS = {
    ("martinet.json", "extremal"): ["--covector", "0,0,0,1"],
    ("martinet.json", "audit"): ["--covector", "0,0,1"],
    ("martinet.json", "pca"): ["--covector", "0,0,1"],
}


def run(outdir: Path) -> int:
    scenarios = Path(__file__).resolve().parents[1] / "scenarios"
    outdir.mkdir(parents=True, exist_ok=True)
    failures = 0
    started = time.monotonic()
    for fixture, commands in JOBS.items():
        for command in commands:
            ext = "csv" if command in ("flow", "variation") else "json"
            out = outdir / f"{Path(fixture).stem}.{command}.{ext}"
            argv = [command, str(scenarios / fixture), "--out", str(out)]
            argv += EXTRA_ARGS.get((fixture, command), [])
            code = geocon_main(argv)
            status = "ok" if code == 0 else f"exit {code}"
            print(f"{fixture:24s} {command:10s} {status:8s} -> {out}")
            if code != 0:
                failures += 1
    print(f"done in {time.monotonic() - started:.1f}s, {failures} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", type=Path, default=Path("fixture_reports"))
    sys.exit(run(ap.parse_args().outdir))
