"""
Stability bounds, measured and promised
=======================================

For a strongly convex Huber regression the leave-one-out bound says how
far any prediction can move when one point is added. We add a point with a
range of responses, refit, and compare the largest observed move with the
bound.
"""

import numpy as np

from stabcp import (
    Dataset,
    RlmConfig,
    SgdConfig,
    fit_rlm,
    fit_sgd_coupled_loo,
    lipschitz_profile_linear_huber,
    rlm_bounds,
    sgd_bounds_convex,
    sgd_bounds_nonconvex,
)

rng = np.random.default_rng(0)
n, d = 25, 3
X = rng.normal(size=(n, d)) / np.sqrt(d)
y = X @ np.array([1.0, -0.5, 0.25]) + rng.normal(size=n)
data = Dataset(X, y)
x_new = rng.normal(size=d) / np.sqrt(d)
pts = np.vstack([X, x_new])

# %% RLM: penalty ||theta||^2, so the objective is 2-strongly convex
cfg = RlmConfig(grad_tol=1e-10)
prof = lipschitz_profile_linear_huber(X, x_new[None, :], epsilon=1.0, omega_weight=1.0)
loo, ro = rlm_bounds(prof, 0)
tau = np.append(loo.tau_train, loo.tau_test)
base = fit_rlm(data, cfg, 1.0).predict(pts)
moves = [np.abs(fit_rlm(data.augment(x_new, v), cfg, 1.0).predict(pts) - base)
         for v in np.linspace(-10, 10, 21)]
ratio = np.max(moves, axis=0) / tau
print(f"RLM: largest move / bound = {ratio.max():.3f} (must stay below 1)")

# %% SGD with coupled epoch permutations: same story, no solver slack
scfg = SgdConfig(epochs=5, learning_rate=0.05, permutation_seed=1)
prof0 = lipschitz_profile_linear_huber(X, x_new[None, :], 1.0, 0.0)
sloo, sro = sgd_bounds_convex(prof0, scfg.epochs, scfg.learning_rate, 0)
stau = np.append(sloo.tau_train, sloo.tau_test)
worst = 0.0
for v in np.linspace(-10, 10, 21):
    a, b = fit_sgd_coupled_loo(data, (x_new, v), scfg, 1.0)
    worst = max(worst, float(np.max(np.abs(a.predict(pts) - b.predict(pts)) / stau)))
print(f"SGD: largest move / bound = {worst:.3f}")
print(f"replace-one bound is twice leave-one-out: {np.allclose(sro.tau_train, 2 * sloo.tau_train)}")

# %% without convexity the epoch count compounds geometrically
for R in (1, 5, 15):
    nc, _ = sgd_bounds_nonconvex(prof0, R, 0.01, 0)
    cv, _ = sgd_bounds_convex(prof0, R, 0.01, 0)
    print(f"R={R:2d}: convex tau_test {cv.tau_test:.4f}, non-convex {nc.tau_test:.4g}")
