"""
Stopping early with a sequential score test
===========================================

"""

import numpy as np

from raoscore import models
from raoscore.sequential import SequentialPlan, calibrate, compare_fixed_vs_sequential, run_sequential

model = models.NormalModel(sigma2=1.0)

# the boundary on the cumulative score has no closed form; simulate it
plan = calibrate(SequentialPlan(theta0=0.0, n_max=30, alpha=0.05), model, reps=10000, seed=1)
print("boundary A(30) =", plan.boundary)

# feed observations one at a time
rng = np.random.default_rng(2)
outcome = run_sequential(model, iter(rng.normal(1.0, 1.0, 30)), plan)
print(outcome.decision, "at n =", outcome.stopping_time)

# power and average sample size against the fixed-N one-sided test
for theta in (0.0, 0.25, 0.5, 1.0):
    rep = compare_fixed_vs_sequential(model, theta, plan, reps=4000, seed=3)
    print(f"theta {theta:4.2f}: sequential power {rep.sequential_power:.3f} "
          f"E[N] {rep.expected_stopping_time:5.2f}  fixed-N power {rep.fixed_power:.3f}")

# a taste-panel style binomial null p0 = 1/3
bern = models.BernoulliModel()
bplan = calibrate(SequentialPlan(theta0=1 / 3, n_max=50, alpha=0.05), bern, reps=10000, seed=4)
rep = compare_fixed_vs_sequential(bern, 0.6, bplan, reps=4000, seed=5)
print(f"binomial: A = {bplan.boundary:.4g}, power at p = 0.6 {rep.sequential_power:.3f}, "
      f"E[N] {rep.expected_stopping_time:.2f}")
