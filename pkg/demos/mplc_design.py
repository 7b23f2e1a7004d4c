"""Design a three-plane light converter for the 2D mode splitter.

A coarse 128x128 grid keeps this to a few seconds; the acceptance suite uses
the full 256x256 grid.
"""

import numpy as np

from modehom import biphoton as bp
from modehom.freespace import transfer_matrix
from modehom.modefield import LG, GridSpec, build_basis
from modehom.wfm import WfmConfig, bandwidth_scan, wavefront_match

wl = 810e-9
grid = GridSpec(nx=128, ny=128, dx=50e-6, dy=50e-6)
basis = build_basis([LG(-1), LG(1)], grid, wl)

design, report = wavefront_match(basis, bp.u2().entries, WfmConfig(sweep_count=40))
print("efficiency per sweep:", np.round(report.efficiency_history[::10], 4))

m = transfer_matrix(design, wl)
print("transfer matrix:\n", np.round(m.transfer, 3))
print(f"mean efficiency {m.mean_efficiency:.4f}, loss {m.mode_independent_loss:.4f}, fidelity {m.fidelity:.4f}")

# a single design wavelength gives a narrow passband
for w, eff in bandwidth_scan(design, np.arange(800e-9, 821e-9, 5e-9)).items():
    print(f"{w * 1e9:.0f} nm  {eff:.4f}")
