"""
PSO, GA and SA on a benchmark and on the controller
===================================================

All three optimizers get the same evaluation budget. On the sphere function
the answer is known, which checks each search on its own. On the controller
cost the question is which method gets to a good gain set in fewer
iterations.
"""

import numpy as np

from gfm_smc import BASELINE_GAINS, default_scenario, run_scenario
from gfm_smc.cli import comparison_table, format_table
from gfm_smc.optimize import SearchSpace, convergence_iteration, run_campaign

# %%
# Sphere function with its minimum at (3, -2, 1.5), 50 x 45 evaluations.
box = SearchSpace(lower=(-10.0,) * 3, upper=(10.0,) * 3, names=("a", "b", "c"))


def sphere(x):
    return float(np.sum((x - np.array([3.0, -2.0, 1.5])) ** 2))


for m in ("pso", "ga", "sa"):
    c = run_campaign(m, range(5), cost=sphere, space=box)
    print(f"{m}: median best {np.median(c.best_costs):.2e}")

# %%
# Controller cost on a shortened scenario, 10 x 10 evaluations, 5 seeds.
sc = default_scenario().with_horizon(0.2)
base = run_scenario(BASELINE_GAINS, sc).iae
budgets = {"pso": dict(swarm_size=10, max_iterations=10),
           "ga": dict(population=10, generations=10),
           "sa": dict(moves_per_iteration=10, iterations=10)}
camps = {m: run_campaign(m, range(5), scenario=sc, **kw) for m, kw in budgets.items()}

# convergence is judged against a threshold near the swarm's typical result
threshold = 1.1 * float(np.median(camps["pso"].best_costs))
text, _ = format_table(comparison_table(base, camps, threshold))
print(f"\nthreshold {threshold:.5f}\n{text}")

for m, c in camps.items():
    its = [convergence_iteration(r, threshold) for r in c.reports]
    print(f"{m}: crossing iteration per seed {its}")
