"""
Recovering a trait network from related samples
===============================================

Simulate one desk-scale dataset (100 individuals in families of five, 20
traits, dense correlated noise), fit the penalised EM estimator and the
plain graphical lasso at the same penalty, and compare edge recovery.
"""

import numpy as np

from g3m import (FitConfig, GeneratorSpec, SimConfig, edge_set, fit_g3m, make_dataset,
                 score_recovery, vanilla_glasso)

cfg = SimConfig(N=100, P=20, n_datasets=1, C_gen=GeneratorSpec("random", density=0.05),
                D_gen=GeneratorSpec("wishart"), snr=0.2, seed=3)
ds = make_dataset(cfg, 0)
truth = edge_set(ds.C_true)
print(f"true network: {len(truth)} edges among {cfg.P} traits; "
      f"global heritability {ds.meta['h2_global']:.4f}")

# Only a sixth of the variance is genetic, and the noise is itself correlated.
# The sample covariance mixes both, so the plain glasso sees noise edges.
lam = 0.01
fit = fit_g3m(ds.Y, ds.R, FitConfig(lam=lam))
plain = vanilla_glasso(ds.Y, lam).C_hat

for name, C in (("penalised EM", fit.C_hat), ("plain glasso", plain)):
    est = edge_set(C)
    tpr, fpr = score_recovery(est, truth)
    print(f"{name:>13}: {len(est):3d} edges, power {tpr:.2f}, type I error {fpr:.3f}")

# A single cold-started fit often spends its whole iteration budget; the ROC
# sweeps warm-start each penalty from the previous one.
print(f"EM: {fit.iters} iterations, converged={fit.converged}, "
      f"objective rose by {fit.objective_trace[-1] - fit.objective_trace[0]:.1f}")
print("smallest objective step:", np.diff(fit.objective_trace).min())
