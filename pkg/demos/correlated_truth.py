"""
Product-form densities still allow dependent p-values
=====================================================

The joint mixture factorizes each component density across tests
(conditional independence given the configuration), yet the marginal
p-values can be strongly dependent when the configuration weights are
not a product of their margins. This script builds such a case with
two tests and measures the induced correlations.
"""

import numpy as np

from comphyp import config_to_string, fit_joint, index_to_config
from comphyp.simulate import correlated_truth_demo

rng = np.random.Generator(np.random.Philox(7))

# 1. Two tests, weights chosen so the truths are positively associated:
#    items tend to be null in both or alternative in both.
data, info = correlated_truth_demo(20_000, rng)
print("configuration weights (00, 01, 10, 11):", info["weights"])
print(f"truth correlation        {info['corr_truth']:.3f}")
print(f"p-value correlation      {info['corr_pvalues']:.3f}")
print(f"probit score correlation {info['corr_scores']:.3f}")

# 2. The factorized model has no trouble with this dependence, because
#    it lives entirely in the weights, not in the component densities.
model = fit_joint(data.pmatrix)
print("\nfitted weights:")
for k, w in enumerate(model.weights):
    print(f"  {config_to_string(index_to_config(k, 2))}  fitted {w:.4f}  true {data.weights_true[k]:.4f}")

# 3. Sanity: the empirical truth frequencies match the weights.
freq = np.bincount(data.truth, minlength=4) / data.truth.size
print("\nempirical config frequencies:", np.round(freq, 4))
