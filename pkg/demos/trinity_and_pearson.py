"""
Score, Wald and likelihood-ratio tests side by side
===================================================

"""

import numpy as np

from raoscore import models
from raoscore.core import Dataset
from raoscore.estimate import Fits, Restriction, fit_both, fit_restricted
from raoscore.trinity import lr_test, one_sided_score_test, rao_score_test, trinity

rng = np.random.default_rng(0)

# normal mean with known variance: the score is linear in mu, so all three
# statistics coincide with n (ybar - mu0)^2
y = rng.normal(0.3, 1.0, 100)
data = Dataset.from_arrays(y=y)
model = models.NormalModel(sigma2=1.0)
null = Restriction.subset([0], [0.0])
for name, res in trinity(model, data, null, fit_both(model, data, null)).items():
    print(f"{name:5s} {res.statistic:9.4f}  p = {res.p_value:.4g}")
print("n ybar^2 =", y.size * y.mean() ** 2)

# one-sided version: sqrt(n) ybar
print("one-sided z:", one_sided_score_test(model, data, [0.0]).statistic)

# multinomial goodness of fit: the score test is Pearson's chi-square,
# the likelihood ratio is the G statistic and differs
counts = np.array([10.0, 20.0, 30.0, 40.0])
mdata = models.multinomial_data(counts)
mmodel = models.MultinomialModel(4)
uniform = Restriction.subset([0, 1, 2], [0.25, 0.25, 0.25])
fits = fit_both(mmodel, mdata, uniform)
print("RS      :", rao_score_test(mmodel, mdata, uniform, fits).statistic)
print("Pearson :", models.pearson_statistic(counts, [0.25] * 4))
print("LR (G)  :", lr_test(mmodel, mdata, uniform, fits).statistic)

# the score test needs only the restricted fit, which helps when a cell is empty
sparse = np.array([0.0, 12.0, 30.0, 58.0])
sdata = models.multinomial_data(sparse)
rs = rao_score_test(mmodel, sdata, uniform, Fits(fit_restricted(mmodel, sdata, uniform)))
print("RS with an empty cell:", rs.statistic)
