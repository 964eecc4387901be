"""
Beyond linear models: kernels, a small network and bagging
==========================================================

The same interval construction runs with any learner that reports
stability bounds. The kernel learners freeze the feature map at the
training set; the network bound is a heuristic; bagging has a
closed-form bound that depends only on the bag size and output range.
"""

import numpy as np

from stabcp import (
    BaggingConfig,
    BaggingLearner,
    KernelKind,
    KernelRlmLearner,
    KernelSpec,
    MlpLearner,
    SyntheticSpec,
    bagging_bound_derandomized,
    gen_synthetic,
    loo_stabcp,
)

train, test = gen_synthetic(SyntheticSpec(n=80, m=40, d=4, model="nonlinear", seed=11))

learners = {
    "kernel ridge (rbf)": KernelRlmLearner(KernelSpec(KernelKind.RBF, sigma=0.3)),
    # heuristic bound: no coverage guarantee
    "mlp, 20 hidden": MlpLearner(hidden=(20,)),
    "bagged stumps": BaggingLearner(BaggingConfig(n_bags=100)),
}
for name, learner in learners.items():
    ivs = loo_stabcp(train, test.X, 0.1, learner)
    cover = np.mean([iv.contains(v) for iv, v in zip(ivs, test.y)])
    print(f"{name:20s} coverage {cover:.2f}  length {np.mean([iv.length for iv in ivs]):.3f}")

# %% the bagging bound shrinks only through the inclusion probability
for n in (20, 100, 1000):
    print(f"n={n:5d}: tau = {bagging_bound_derandomized(1.0, 2.0, n, n):.5f}")
