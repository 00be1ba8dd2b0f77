"""Checks on the shipped configs and the command-line runner.

usage: runner_checks.py <chirpnav binary> <repo root> <scratch dir>
"""

import csv
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def run(cli, *args):
    return subprocess.run([cli, *args], capture_output=True, text=True, timeout=600)


def main():
    cli, root, scratch = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(scratch, ignore_errors=True)
    scratch.mkdir(parents=True)
    schema = json.loads((root / "schema" / "run_config.schema.json").read_text())
    columns = json.loads((root / "schema" / "csv_columns.json").read_text())
    validator = jsonschema.Draft202012Validator(schema)
    failures = []

    def check(ok, what):
        print(("ok   " if ok else "FAIL ") + what)
        if not ok:
            failures.append(what)

    configs = sorted((root / "configs").glob("*.json"))
    check(len(configs) >= 5, "configs present")
    for path in configs:
        errors = list(validator.iter_errors(json.loads(path.read_text())))
        check(not errors, f"{path.name} matches schema" + (f": {errors[0].message}" if errors else ""))

    bad = json.loads((root / "configs" / "stationary.json").read_text())
    bad["scenario"]["speed_kph"] = 1.0
    check(not validator.is_valid(bad), "schema rejects unknown keys")
    (scratch / "bad.json").write_text(json.dumps(bad))
    r = run(cli, "simulate", "--config", str(scratch / "bad.json"), "--out", str(scratch / "bad"))
    check(r.returncode == 2 and "speed_kph" in r.stderr, "unknown key exits 2 with a diagnostic")

    bad = json.loads((root / "configs" / "stationary.json").read_text())
    bad["radio"] = {"sf": 20}
    (scratch / "bad_sf.json").write_text(json.dumps(bad))
    r = run(cli, "simulate", "--config", str(scratch / "bad_sf.json"), "--out", str(scratch / "bad_sf"))
    check(r.returncode == 2, "invalid value exits 2")
    check(run(cli, "simulate").returncode == 2, "missing --config exits 2")
    check(run(cli, "sweep", "--config", str(root / "configs" / "stationary.json"), "--param", "colour",
              "--values", "1").returncode == 2, "unknown sweep parameter exits 2")

    lost = json.loads((root / "configs" / "stationary.json").read_text())
    lost["link"] = {"wall_db": 200.0}
    (scratch / "lost.json").write_text(json.dumps(lost))
    r = run(cli, "simulate", "--config", str(scratch / "lost.json"), "--out", str(scratch / "lost"))
    check(r.returncode == 3, "signal loss exits 3")

    out = scratch / "stationary"
    r = run(cli, "simulate", "--config", str(root / "configs" / "stationary.json"), "--out", str(out), "--seed", "11")
    check(r.returncode == 0, "stationary run exits 0")
    metrics = json.loads((out / "metrics.json").read_text())
    check(metrics["position_rmse_m"] < 1e-3, "stationary zero-noise position rmse < 1 mm")
    emitted = json.loads((out / "config.json").read_text())
    check(validator.is_valid(emitted), "emitted config matches schema")
    check(emitted["seed"] == 11, "--seed overrides the config")
    for name in ("ground_truth.csv", "features.csv", "estimate.csv"):
        with open(out / name, newline="") as f:
            header = next(csv.reader(f))
        check(header == list(columns[name]), f"{name} columns match csv_columns.json")

    r = run(cli, "metrics", "--truth", str(out / "ground_truth.csv"), "--estimate", str(out / "estimate.csv"))
    check(r.returncode == 0 and json.loads(r.stdout)["position_rmse_m"] < 1e-3, "metrics subcommand")

    sweep = scratch / "sweep"
    r = run(cli, "sweep", "--config", str(root / "configs" / "stationary.json"), "--param", "window",
            "--values", "10,20", "--out", str(sweep))
    check(r.returncode == 0, "sweep exits 0")
    with open(sweep / "sweep_window.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    check(len(rows) == 2 and list(rows[0]) == list(columns["sweep_<param>.csv"]), "sweep table has one row per value")

    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
