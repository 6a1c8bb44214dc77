"""Finite-difference audit of the hand-derived network gradients.

Backpropagation here is written out by hand, so every layer recipe in
the default grid is re-checked against central finite differences. The
corrupt flag is the negative control: poisoning a single analytic
gradient entry must blow the worst-case error past the tolerance.
"""

from deepmatch import default_grid, run_case


def main():
    cases = default_grid(count=12, seed=0)
    print(f"{'case':<44} {'max rel err':>12}")
    worst = 0.0
    for case in cases:
        err = run_case(case, step=1e-5)
        worst = max(worst, err)
        print(f"{case.name:<44} {err:>12.3e}")
    print(f"\nworst of {len(cases)} cases: {worst:.3e} (tolerance 1e-4)")

    poisoned = run_case(cases[0], step=1e-5, corrupt=True)
    print(f"negative control, one corrupted gradient entry: {poisoned:.3e}")


if __name__ == "__main__":
    main()
