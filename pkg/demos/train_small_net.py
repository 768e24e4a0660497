"""
Training the miniature classifier on an inseparable set
=======================================================

xor_patches labels an image by whether its two halves were shifted the
same way. Class means coincide, so no linear readout can do better than
chance, which makes it a fair sanity check for the conv net: if the
depthwise/pointwise stack learns it, the nonlinearity is real.
"""

import numpy as np

from cardiotwin.datasets import linear_probe_accuracy, split, xor_patches
from cardiotwin.net import accuracy, build_net, fit, gradient_check
from cardiotwin.scaling import ScalingConfig, StageSpec

config = ScalingConfig(phi=0.0, base_resolution=16,
                       stages=(StageSpec(3, 8, 1), StageSpec(3, 16, 1)))

x, y = xor_patches(2000, resolution=16, seed=5)
xtr, ytr, xte, yte = split(x, y, train_frac=0.5, seed=5)

probe = linear_probe_accuracy(x, y)
print(f"linear probe on raw pixels: {probe:.3f} (chance is 0.5)")

net = build_net(config, seed=5)
print(f"net: {net.param_count()} params, {net.mac_count():,} MACs per image")

# Backprop is hand-written, so check it against central differences
# before spending any epochs on it.
err = gradient_check(net, xtr[:8], ytr[:8], n_checks=25, seed=5)
print(f"gradient check, worst relative error: {err:.2e}\n")

fit(net, xtr, ytr, epochs=15, lr=0.2, batch_size=32, seed=5,
    eval_set=(xte, yte), verbose=True)

print(f"\nheld-out accuracy: {accuracy(net, xte, yte):.4f}")
probs = net.predict_proba(xte[:4])
np.set_printoptions(precision=3, suppress=True)
print(f"first four held-out rows, [p(no arrest), p(arrest)]:\n{probs}")
