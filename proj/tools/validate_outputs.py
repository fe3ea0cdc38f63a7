"""Run every subcommand on the shipped configs and validate the JSON it writes."""

import argparse
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

RUNS = [
    ("simulate", "quadratic_theta_pi3", "summary"),
    ("simulate", "quadratic_theta_pi2", "summary"),
    ("bias", "indicator_legendre", "summary"),
    ("simulate", "indicator_pcs", "summary"),
    ("counterexample", "counterexample", "counterexample"),
    ("truncation", "truncation", "truncation"),
    ("interlacing", "interlacing", "interlacing"),
]


def schema_for(path: pathlib.Path) -> str:
    name = path.name
    if name.endswith("_summary.json"):
        return "summary"
    return name.split("_")[0]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cli", required=True)
    ap.add_argument("--configs", required=True, type=pathlib.Path)
    ap.add_argument("--schemas", required=True, type=pathlib.Path)
    args = ap.parse_args()

    schemas = {p.name.split(".")[0]: json.loads(p.read_text()) for p in args.schemas.glob("*.schema.json")}
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        out = pathlib.Path(tmp)
        for cmd, cfg, _ in RUNS:
            rc = subprocess.run([args.cli, cmd, str(args.configs / f"{cfg}.ini"), "--out", str(out), "--jobs", "0"],
                                capture_output=True, text=True).returncode
            if rc not in (0, 2):
                print(f"FAIL {cmd} {cfg}: exit {rc}")
                failures += 1
        files = sorted(out.glob("*.json"))
        seen = {schema_for(f) for f in files}
        for _, _, kind in RUNS:
            if kind not in seen:
                print(f"FAIL no {kind} JSON written")
                failures += 1
        for f in files:
            kind = schema_for(f)
            try:
                jsonschema.validate(json.loads(f.read_text()), schemas[kind])
                print(f"ok   {f.name} ({kind})")
            except (KeyError, jsonschema.ValidationError) as e:
                print(f"FAIL {f.name}: {e}")
                failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
