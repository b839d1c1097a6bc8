"""Three pricers on one strike grid, and the smiles they imply.

BS has a flat smile by construction.  Jumps with a negative mean tilt it
down to the right; stochastic vol with negative rho does the same through
a different mechanism.  Both collapse to BS when their extra parameters
are switched off.
"""

import numpy as np

from hedgelab.pricers import EuroCall, JDParams, SVParams, bs_price, implied_vol, jd_price, sv_price

spot, r, tau = 100.0, 0.02, 28 / 365
strikes = np.array([90, 95, 97, 100, 103, 105, 110], dtype=float)
jd = JDParams(sigma=0.15, jump_intensity=0.8, jump_mean=-0.15, jump_vol=0.1)
sv = SVParams(v0=0.04, kappa=2.0, theta=0.04, xi=0.6, rho=-0.7)

print(f"{'K':>6} {'BS':>9} {'JD':>9} {'SV':>9} {'iv JD':>7} {'iv SV':>7}")
for k in strikes:
    opt = EuroCall(k, tau, spot, r)
    b, j, s = bs_price(opt, 0.2), jd_price(opt, jd), sv_price(opt, sv)
    print(f"{k:6.0f} {b:9.4f} {j:9.4f} {s:9.4f} {implied_vol(opt, j):7.4f} {implied_vol(opt, s):7.4f}")

# nesting: no jumps is BS, vanishing vol-of-vol with v0 = theta is BS
opt = EuroCall(100.0, tau, spot, r)
print("jd(intensity=0) - bs:", jd_price(opt, JDParams(0.2)) - bs_price(opt, 0.2))
print("sv(xi~0) - bs:      ", sv_price(opt, SVParams(0.04, 1.0, 0.04, 1e-6)) - bs_price(opt, 0.2))
