"""
The activation functions and their properties
=============================================

Every activation in the benchmark, evaluated on a few points, plus the
one-parameter family that interpolates between ReLU, |x| and beyond.
"""

import numpy as np

from actfn.activations import NAMED_KINDS, ActivationSpec, act_forward, check_properties, derivative

x = np.array([-3.0, -1.0, -0.25, 0.0, 0.25, 1.0, 3.0])
print("x        ", np.round(x, 2))
for kind in NAMED_KINDS:
    spec = ActivationSpec(kind)
    print(f"{spec.display_name:9s}", np.round(act_forward(spec, x), 3))

# The parametric family: slope alpha for x < 0, identity for x >= 0.
# alpha = 0 is ReLU, alpha = -1 is |x|, and alpha = 2 leans the other way.
for alpha in (-2.0, -1.0, 0.0, 2.0):
    spec = ActivationSpec("maf", alpha)
    print(f"{spec.name:9s}", np.round(act_forward(spec, x), 3), " slope", np.round(derivative(spec, x), 2))

# Exact identities, not just close ones
grid = np.linspace(-20, 20, 100_001)
print("maf:-1 == abs  :", np.array_equal(act_forward(ActivationSpec("maf", -1.0), grid), np.abs(grid)))
print("maf:0  == relu :", np.array_equal(act_forward(ActivationSpec("maf", 0.0), grid), np.maximum(grid, 0)))

# Properties are checked numerically on a wide symmetric grid
print()
print(f"{'':9s} param  mono   smooth bound  symm")
for spec in [ActivationSpec(k) for k in NAMED_KINDS] + [ActivationSpec("maf", 2.0)]:
    p = check_properties(spec)
    print(f"{spec.name:9s}", "  ".join(f"{str(v):5s}" for v in p.as_tuple()))
