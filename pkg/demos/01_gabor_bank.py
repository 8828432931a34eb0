"""
Gabor filter banks
==================

Build the three banks, look at their sizes and check that every kernel
is blind to flat regions and tuned to one orientation.
"""

import numpy as np

from gaborcnn.gabor import GaborParams, build_bank, conv2d_same, gabor_grid

# a single kernel before DC correction peaks at A*cos(phase) in the middle
p = GaborParams(sigma=2.201, wavelength=5.66, phase=0.0, orientation=np.pi / 4)
g = gabor_grid(p)
print("kernel side", g.shape[0], "centre", g[p.radius, p.radius])

for variant in "bcd":
    bank = build_bank(variant)
    sizes = sorted({k.shape[0] for k in bank.kernels})
    print(f"bank {variant}: {len(bank)} kernels, sides {sizes}")

# zero-mean kernels ignore brightness
bank = build_bank("d")
flat = np.full((32, 32), 0.7)
print("max response to a flat image:", max(np.abs(conv2d_same(flat, k)).max() for k in bank.kernels))

# a vertical grating excites the theta=0 filter far more than the theta=pi/2 one
y, x = np.mgrid[0:64, 0:64]
grating = np.cos(2 * np.pi / 5.66 * x)
b = build_bank("b")
for prm, k in b:
    energy = np.mean(conv2d_same(grating, k) ** 2)
    print(f"theta={prm.orientation:.3f}  energy={energy:.4f}")
