"""Counterfactual counts across correlation thresholds on the bundled fixture."""
import argparse
import csv
import tempfile

from govimpact.fixture import build_fixture
from govimpact.pipeline import load_config, run_all


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", help="output directory (default: temporary)")
    a = p.parse_args()
    out = a.out or tempfile.mkdtemp(prefix="govimpact-sweep-")
    paths = build_fixture(f"{out}/fixture")
    res = run_all(load_config(paths["config"], {"out": f"{out}/run"}))
    with open(res.out_dir / "sweep.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            print("  ".join(f"{k}={v}" for k, v in row.items()))


if __name__ == "__main__":
    main()
