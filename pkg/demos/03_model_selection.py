"""Choosing K, L and the covariance variant with BIC.

The grid search fits every (variant, K, L) cell and ranks them by the chosen
criterion.  Constrained variants share B and/or D across components, which
costs fewer parameters.
"""

# %%
from blockmix import FitConfig, GridSpec, grid_search, sample, scenario_a

data, _, _ = sample(scenario_a(n=300, seed=5))
grid = GridSpec(variants=("CC", "UU"), K_range=(1, 3), L_range=(1, 2), criterion="BIC")
best, table = grid_search(data, grid, FitConfig(n_restarts=3, seed=5))

# %%
print(f"{'cell':>14} {'loglik':>10} {'n_par':>6} {'BIC':>10}")
for r in table:
    print(f"{r.label:>14} {r.loglik:10.2f} {r.n_par:6d} {r.bic:10.2f}")

# %%
print("selected:", best.variant.value, "K =", best.dims.K, "L =", best.dims.L)

# %%
# Warm starts seed each K+1 cell with a split of the best K solution, so the
# fitted log-likelihood cannot go down as K grows.
grid = GridSpec(variants=("UU",), K_range=(1, 4), L_range=(2, 2), warm_start=True)
_, table = grid_search(data, grid, FitConfig(n_restarts=2, seed=5))
for r in sorted(table, key=lambda r: r.K):
    print("K =", r.K, " loglik =", round(r.loglik, 3))
