"""Write the bundled end-to-end fixture and run the full pipeline on it."""
import argparse

from govimpact.fixture import build_fixture
from govimpact.pipeline import load_config, run_all


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="fixture")
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    paths = build_fixture(a.out)
    res = run_all(load_config(paths["config"], {"out": f"{a.out}/out", "workers": a.workers}))
    for r in res.reports:
        print(r.event_id, r.asset, r.status, r.price_impact_pct, r.price_class,
              r.indirect_loss_usd, r.reason)
    print(f"outputs in {res.out_dir}")


if __name__ == "__main__":
    main()
