"""
Climbing the compound-scaling ladder
====================================

One knob, phi, grows depth, width, and input resolution together:
depth by alpha^phi, width by beta^phi, resolution by gamma^phi. With
the default coefficients alpha*beta^2*gamma^2 = 1.9203, so the forward
cost should roughly double per step. The table below resolves the
family at a few phis and recounts the cost two independent ways: the
closed-form layer walk in `count_macs` and a recount over the layers of
a net actually built at that size.
"""

from cardiotwin.net import build_net
from cardiotwin.scaling import ScalingConfig, count_macs, count_params

print(f"{'phi':>4} {'res':>4} {'stages (k,w,r)':<28} {'params':>8} {'MACs':>11} {'ratio':>6}")
prev = None
for phi in (0.0, 0.5, 1.0, 2.0, 3.0):
    arch = ScalingConfig(phi=phi).resolve()
    macs = count_macs(arch)
    stages = " ".join(f"({s.kernel},{s.width},{s.repeats})" for s in arch.stages)
    ratio = "" if prev is None else f"{macs / prev:.3f}"
    print(f"{phi:4.1f} {arch.resolution:4d} {stages:<28} {count_params(arch):8,d} "
          f"{macs:11,d} {ratio:>6}")
    prev = macs

# Cross-check at phi = 0: build the net and let it walk its own layers.
net = build_net(ScalingConfig(phi=0.0), seed=0)
assert net.mac_count() == count_macs(ScalingConfig(phi=0.0).resolve())
assert net.param_count() == count_params(ScalingConfig(phi=0.0).resolve())
print(f"\nbuilt phi=0 net agrees: {net.param_count():,} params, {net.mac_count():,} MACs")
