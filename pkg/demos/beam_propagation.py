"""Propagate LG modes numerically and compare with the closed form."""

import numpy as np

from modehom.freespace import propagate
from modehom.modefield import GridSpec, azimuthal_spectrum, inner_product, lg_field

wl, w0 = 810e-9, 0.6e-3
grid = GridSpec(nx=256, ny=256, dx=25e-6, dy=25e-6)
zr = np.pi * w0**2 / wl
print(f"Rayleigh range {zr:.3f} m")

for ell, p in [(0, 0), (1, 0), (-2, 1)]:
    f0 = lg_field(ell, p, w0, grid, wl)
    for z in (0.4, 0.8, 1.6):
        ov = inner_product(lg_field(ell, p, w0, grid, wl, z=z), propagate(f0, z))
        print(f"LG({ell:+d},{p}) z={z:.1f} m  |overlap|={abs(ov):.12f}  phase={np.angle(ov):+.1e}")

# the propagated beam keeps its OAM content
f = propagate(lg_field(1, 0, w0, grid, wl), 0.8)
for m, w in azimuthal_spectrum(f, [-1, 0, 1]).items():
    print(f"OAM power at l={m:+d}: {w:.6f}")
