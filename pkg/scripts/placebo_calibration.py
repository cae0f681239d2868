"""Per-slot rejection rate without any injected effect, for each SE method."""
import argparse

from govimpact.experiments import did_monte_carlo


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--controls", type=int, default=10)
    p.add_argument("--corr", type=float, default=0.8)
    p.add_argument("--p-threshold", type=float, default=0.1)
    a = p.parse_args()
    for method in ("cr1_exchangeable", "cr1"):
        s = did_monte_carlo(range(a.seeds), None, a.controls, a.corr, se_method=method,
                            p_threshold=a.p_threshold)
        print(f"{method:18s} rejection rate {s.false_positive_rate:.2%} "
              f"(nominal {a.p_threshold:.0%})")


if __name__ == "__main__":
    main()
