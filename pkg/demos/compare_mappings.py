"""One Branin run in D = 25 per method, printing the best value found.

Compares the back-projection with the projected kernel, the clamp map with
the low-dimensional kernel, and uniform random search, all on the same
embedding and active coordinates.

    python3 demos/compare_mappings.py [seed]
"""

import sys
import time

from rembo import KernelSpec, RunConfig, make_objective, random_search_run, rembo_run

D, d, BUDGET = 25, 2, 60


def main(seed=0):
    objective = make_objective("branin", D, seed=seed)
    print(f"branin in [-1, 1]^{D}, active coordinates {[int(i) for i in objective.active]}, "
          f"minimum {objective.f_min:.6f}")
    runs = {
        "gamma + projected kernel": RunConfig(d=d, D=D, budget=BUDGET, seed=seed, mapping="gamma",
                                              kernel=KernelSpec(warp="projected")),
        "phi + low-dimensional kernel": RunConfig(d=d, D=D, budget=BUDGET, seed=seed, mapping="phi",
                                                  kernel=KernelSpec(warp="identity")),
    }
    for name, config in runs.items():
        t0 = time.perf_counter()
        inc, _ = rembo_run(config, objective)
        print(f"  {name:30s} best {inc.best_f:.6f}  gap {inc.best_f - objective.f_min:.3e}"
              f"  ({time.perf_counter() - t0:.1f}s)")
    inc, _ = random_search_run(RunConfig(d=d, D=D, budget=BUDGET, seed=seed), objective)
    print(f"  {'random search':30s} best {inc.best_f:.6f}  gap {inc.best_f - objective.f_min:.3e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
