"""Finite-difference verification of the hand-written backward pass.

The attention layer's backward is derived by hand; central differences
on a quadratic loss are the referee. Also shows the harness on a toy
one-parameter problem where the check is essentially exact.
"""

import numpy as np

from panobev.attn import full_layer_gradient_check, gradient_check


# A loss that is linear in a single scalar: the central difference is
# exact up to rounding, so the relative error is ~1e-12.
def linear_loss(params):
    w = params["w"]
    return 3.0 * float(w[0]), {"w": np.array([3.0])}


err = gradient_check(linear_loss, {"w": np.array([0.7])}, step=1e-5)
print(f"linear scalar loss: relative error {err:.2e}")

# The real thing: a full layer (8 channels, 16 queries, 2 heads, 4
# points), every parameter tensor perturbed element by element.
err = full_layer_gradient_check(c=8, n=16, n_head=2, n_point=4, step=1e-5, seed=0)
print(f"full attention layer: max relative error {err:.2e} (threshold 1e-4)")
assert err < 1e-4
