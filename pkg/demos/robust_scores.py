"""
Score tests that survive misspecification
=========================================

"""

import numpy as np

from raoscore import models, robust
from raoscore.core import Dataset
from raoscore.estimate import Restriction, fit_both
from raoscore.trinity import rao_score_test, wald_test

rng = np.random.default_rng(1)
n = 5000

# information matrix equality: J (outer product of scores) matches K (negative
# Hessian) for normal data but not for heavy-tailed data
for label, y in (("normal", rng.normal(size=n)), ("t(5)", rng.standard_t(5, size=n))):
    J, K = robust.compute_JK(models.NormalModel(), Dataset.from_arrays(y=y), [y.mean(), y.var()])
    report = robust.im_equality_check(J, K, ["mu", "sigma2"])
    print(f"{label:7s} |J-K|/|K| = {report.relative:.3f}   sigma2 block = {report.blocks[('sigma2', 'sigma2')]:.3f}")

# testing the variance under t(5) data: the sandwich versions divide the
# variance score by its observed spread, which heavy tails inflate
y = rng.standard_t(5, size=400) * np.sqrt(3 / 5)
data = Dataset.from_arrays(y=y)
model = models.NormalModel()
null = Restriction.subset([1], [1.0])
fits = fit_both(model, data, null)
print("RS   :", rao_score_test(model, data, null, fits).statistic)
print("RS*D :", robust.rs_star_D(model, data, null, fits).statistic)
print("W    :", wald_test(model, data, null, fits).statistic)
print("W*   :", robust.wald_star(model, data, null, fits).statistic)

# skewness of regression residuals: the robust denominator replaces 6
e = rng.standard_t(6, size=500)
standard, rob = models.robust_skewness_test(e - e.mean())
print(f"skewness RS = {standard.statistic:.3f}, RS*D = {rob.statistic:.3f}, "
      f"denominator {rob.notes['denominator']:.3f}")

# matrix-level reductions of the doubly robust statistic
rng2 = np.random.default_rng(2)
a, b = rng2.normal(size=(6, 6)), rng2.normal(size=(6, 6))
J, K = a @ a.T + 6 * np.eye(6), b @ b.T + 6 * np.eye(6)
S = rng2.normal(size=6)
S[:2] = 0.0
g, psi, phi = np.arange(2), np.arange(2, 4), np.arange(4, 6)
print("DP with K = J :", robust.rs_star_DP_stat(S, J, J, g, psi, phi), "vs P :", robust.rs_star_P_stat(S, J, g, psi, phi))
print("DP without phi:", robust.rs_star_DP_stat(S, J, K, g, psi, []),
      "vs D :", robust.rs_star_D_subset_stat(S, J, K, g, psi))
