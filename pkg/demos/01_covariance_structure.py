"""Block covariance: what a column clustering implies for correlations.

Each component's covariance is B B' + diag(D), where B is a 0/1 matrix
assigning every indicator to exactly one column cluster.  Two indicators in
the same cluster are correlated; indicators in different clusters are not.
"""

# %%
import numpy as np

from blockmix import assemble_covariance, membership_matrix

# five indicators, the first three in cluster 0 and the last two in cluster 1
B = membership_matrix([0, 0, 0, 1, 1])
D = np.array([0.25, 0.5, 1.0, 0.25, 4.0])
S = assemble_covariance(B, D)
print(S)

# %%
# correlations depend on the error variances only: 1 / sqrt((1 + D_j)(1 + D_j'))
sd = np.sqrt(np.diag(S))
R = S / np.outer(sd, sd)
print(np.round(R, 3))
print("corr(x1, x2) =", R[0, 1], "  formula:", 1 / np.sqrt(1.25 * 1.5))

# %%
# a noisy indicator (D = 4) is only weakly tied to its block
print("corr(x4, x5) =", round(R[3, 4], 3))
