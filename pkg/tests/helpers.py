"""Shared fixtures for the gradient checks."""

import numpy as np

from dsvpr.dsformer import DsFormerWeights

# Step for 64-bit end-to-end checks. Smaller steps drown near-zero
# gradients in rounding noise, larger ones hit the GeM curvature.
E2E_STEP = 3e-5


def conditioned_weights(cfg, seed=0):
    """Default init with generic tables, positions, biases and LN affines.

    The residual FFN biases are shifted positive so the tokens reaching GeM
    sit away from its clamp: a clamped channel has a near-zero gradient that
    finite differences cannot resolve against the 1e-8 floor.
    """
    w = DsFormerWeights.init(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    for name, p in w.items():
        leaf = name.rsplit(".", 1)[-1]
        if name.startswith("pos.") or ".rpe." in name or leaf in ("b", "b1", "b2"):
            p.data = 0.1 * rng.normal(size=p.shape) + (1.0 if leaf == "b2" else 0.0)
        elif leaf == "g":
            p.data = 1.0 + 0.1 * rng.normal(size=p.shape)
    return w
