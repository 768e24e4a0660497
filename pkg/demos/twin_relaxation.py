"""
Windkessel relaxation
=====================

The patient twin keeps one number per patient, an arterial pressure P,
and updates it with an explicit Euler step of

    dP/dt = Q/C - P/(R*C)

Whatever pressure we start from, the update walks toward the stationary
point P* = Q*R with time constant R*C. This script shows the walk for a
resting heart and for a tachycardic one, then checks the step against
scipy's adaptive integrator.
"""

import numpy as np
from scipy.integrate import solve_ivp

from cardiotwin.twin import flow_from_hr, windkessel_step

R = 1.0   # peripheral resistance
C = 1.0   # arterial compliance
SV = 60.0  # stroke volume; at 60 it cancels the per-minute scaling
DT = 0.25  # seconds, well under the R*C stability bound

for hr in (60.0, 140.0):
    q = flow_from_hr(hr, SV)
    p = 0.0
    print(f"hr {hr:5.1f} bpm -> flow {q:6.1f} ml/s, target P* = Q*R = {q * R:6.1f}")
    for step in range(40):
        p = windkessel_step(p, q, R, C, DT)
        if step % 8 == 7:
            print(f"  t = {DT * (step + 1):5.2f} s   P = {p:8.3f}")
    print(f"  residual |P - Q*R| = {abs(p - q * R):.2e}")
    print()

# The same trajectory from a high-accuracy ODE solve. The Euler path and
# the reference agree to a few parts in a million at this dt, which is
# all the twin needs: it feeds a classifier, not a surgeon.
q = flow_from_hr(60.0, SV)
steps = 40
sol = solve_ivp(lambda t, y: [q / C - y[0] / (R * C)], (0.0, steps * DT), [0.0],
                rtol=1e-10, atol=1e-12)
p = 0.0
for _ in range(steps):
    p = windkessel_step(p, q, R, C, DT)
print(f"euler P = {p:.6f}   ode P = {float(sol.y[0, -1]):.6f}   "
      f"gap = {abs(p - float(sol.y[0, -1])):.2e}")
