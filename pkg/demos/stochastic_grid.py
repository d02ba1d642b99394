"""Print the stochastic-completeness grid for both samplers.

Cells where p*m > k ask for more support picks per step than the cap allows;
those are the ones that fall below the bound.

    python3 demos/stochastic_grid.py [trials]
"""

import sys

from hseq.theory import format_reports, stochastic_grid


def main(trials=100_000):
    for sampler in ("marginal", "truncate"):
        reports = stochastic_grid(trials=trials, sampler=sampler)
        bad = [r for r in reports if not r.passed]
        print(f"\nsampler={sampler}: {len(reports) - len(bad)}/{len(reports)} cells pass")
        print(format_reports(reports))
        print("failing cells with p*m <= k:", [(r.m, r.p, r.k, r.L) for r in bad if r.assumption_feasible] or "none")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100_000)
