"""KL divergence estimation on the 1-D Gaussian pair.

N(0, 1.1^2) vs N(1, 0.9^2) has closed-form KL 0.6635. The plain KDE plug-in
drifts with the bandwidth; the weighted estimator stays flat near the truth
once the bandwidth clears the sample spacing (small bandwidths are dominated
by finite-sample effects in the thin tail of the denominator for both
estimators).
"""

import numpy as np

from vwkde import (
    ConstantAlpha,
    GaussianScoreField,
    PairScores,
    SeedSpec,
    fit_gaussian,
    fit_rkhs_alpha,
    gaussian_kl_closed_form,
    make_gaussian,
    sample_gaussian,
)
from vwkde.estimators import kl_estimate_grid

m1 = make_gaussian([0.0], [[1.1**2]])
m2 = make_gaussian([1.0], [[0.9**2]])
truth = gaussian_kl_closed_form(m1, m2)
print(f"closed-form KL(p1 || p2) = {truth:.4f}")

hs = [0.3, 0.4, 0.5, 0.7, 0.9]
trials = 8
master = SeedSpec(20240501)
kde_vals = np.zeros((trials, len(hs)))
vw_vals = np.zeros((trials, len(hs)))
for t in range(trials):
    d1 = sample_gaussian(m1, 1000, master.child(t + 1, 0))
    d2 = sample_gaussian(m2, 1000, master.child(t + 1, 1))
    pair = PairScores(
        GaussianScoreField(fit_gaussian(d1)), GaussianScoreField(fit_gaussian(d2))
    )
    alpha = fit_rkhs_alpha(d1, d2, pair, seed=master.child(t + 1, 2))
    kde_vals[t] = [r.value for r in kl_estimate_grid(d1, d2, ConstantAlpha(1.0), hs)]
    vw_vals[t] = [r.value for r in kl_estimate_grid(d1, d2, alpha, hs)]

print(f"\n{trials} trials, 1000 samples per class:")
print(f"  {'h':>4}  {'plain KDE':>12}  {'weighted':>12}")
for j, h in enumerate(hs):
    print(f"  {h:>4.1f}  {kde_vals[:, j].mean():>7.3f} +- {kde_vals[:, j].std():<4.3f}"
          f"  {vw_vals[:, j].mean():>7.3f} +- {vw_vals[:, j].std():<4.3f}")
kde_range = kde_vals.mean(0).max() - kde_vals.mean(0).min()
vw_range = vw_vals.mean(0).max() - vw_vals.mean(0).min()
print(f"\nspread of the mean across bandwidths: plain {kde_range:.3f}, "
      f"weighted {vw_range:.3f}")
