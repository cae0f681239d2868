"""Flag, removal and spike-recall rates of the outlier filter on random walks."""
import argparse

from govimpact.experiments import cleaning_monte_carlo


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--factor", type=float, nargs="+", default=[10.0, 0.1, 3.0])
    a = p.parse_args()
    for f in a.factor:
        s = cleaning_monte_carlo(range(a.seeds), a.points, a.sigma, factor=f)
        print(f"x{f:<5g} flags {s.global_flag_rate:.3%}  false removals "
              f"{s.false_removal_rate:.3%}  spike recall {s.spike_recall:.1%}  "
              f"step removals {s.step_removal_rate:.3%}  idempotent {s.idempotent}")


if __name__ == "__main__":
    main()
