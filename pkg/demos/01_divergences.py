"""One-shot divergences and how they approach relative entropy on long blocks.

For a coin with bias 0.3 tested against a fair coin we print the
information-spectrum divergence and the hypothesis-testing divergence at a
few smoothing levels, then show the spectrum divergence, normalized by the
block length, drifting towards the relative entropy as the block grows.

Run: ``python3 demos/01_divergences.py``
"""

import numpy as np

from oscl.divergence import dh_eps, dmax, ds_eps, ds_eps_iid, kl

p = np.array([0.3, 0.7])
q = np.array([0.5, 0.5])

print(f"relative entropy D(p||q) = {kl(p, q):.5f} bits, max-divergence = {dmax(p, q):.5f} bits\n")
print("single letter:")
for eps in (0.05, 0.2, 0.5, 0.8):
    print(f"  eps = {eps:4.2f}:  D_s = {ds_eps(p, q, eps):+.4f}   D_H = {dh_eps(p, q, eps).value:+.4f}")

print("\nper-letter spectrum divergence on blocks of length n (exact, by types), eps = 0.1:")
for n in (10, 50, 200, 1000):
    rate = ds_eps_iid(p, q, n, 0.1) / n
    print(f"  n = {n:5d}:  D_s/n = {rate:.4f}   excess over D(p||q) = {rate - kl(p, q):+.4f}")

# D_s is an upper quantile of a sum of n i.i.d. log-ratios, so the excess
# shrinks roughly like 1/sqrt(n).
print("\nThe one-shot rate overshoots the relative entropy on short blocks and converges slowly.")
