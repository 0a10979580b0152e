"""
Moving pruning error onto surviving weights
===========================================

One weight row, a two-input layer, and the closed-form correction that the
rest of the package applies row by row.
"""

import numpy as np
import scipy.linalg

from obr import Hessian, prune_compensation, solve_compensation, RowPartition

# Curvature of a two-input layer. Any X with 2 X X^T = H reproduces it.
h = np.array([[2.0, 1.0], [1.0, 2.0]])
x = scipy.linalg.cholesky(h / 2.0, lower=True)
hessian = Hessian(h, damp_lambda=0.0, source_samples=2)

# Prune the second weight of w = (1, 1).
w = np.array([1.0, 1.0])
mask = np.array([1, 0])
comp, w_bar = prune_compensation(w, mask, hessian)
print("compensated row:", w_bar)
print("objective without / with compensation:", comp.objective_before, comp.objective_after)

# Output error against the dense layer, with and without the correction.
plain = np.linalg.norm((w * mask) @ x - w @ x)
fixed = np.linalg.norm(w_bar @ x - w @ x)
print(f"output error: plain pruning {plain:.4f}, compensated {fixed:.4f}")

# The same solver works for any split of a row. Here eight inputs with
# correlated activations, half of the coordinates carrying a fixed error.
rng = np.random.default_rng(0)
acts = rng.standard_normal((8, 64)) + rng.standard_normal((1, 64))
h8 = Hessian(2 * acts @ acts.T, 0.0, 64)
part = RowPartition(retain=[0, 1, 2, 3], evict=[4, 5, 6, 7])
c = solve_compensation(h8, part, rng.standard_normal(4))
print(f"8-input row: objective {c.objective_before:.3f} -> {c.objective_after:.3f}")
