"""Ideal coincidence rates for the mode splitters.

Prints the distinguishable (R_cl) and indistinguishable (R_qu) coincidence
rate and the resulting visibility for each output projection.
"""

import numpy as np

from modehom import biphoton as bp

e = bp.basis_state

# 2D splitter: perfect HOM suppression for orthogonal outputs
U = bp.u2()
a, b = e(0, 2), e(1, 2)
r_cl, r_qu = bp.classical_and_quantum(bp.CoincidenceSetup(a, b, U, a, b))
print(f"u2   l-1,l+1  R_cl={r_cl:.3f}  R_qu={r_qu:.3f}  V={bp.visibility(r_cl, r_qu):.3f}")

# the output state itself is a two-photon NOON state, listed by occupation
for occ, amp in bp.transform_pair(U, a, b).fock().items():
    print("  ", occ, np.round(amp, 3))

# 3D splitter: dips cap at 50%, same-mode projections double
U = bp.u3()
a, b = e(0, 3), e(2, 3)
for i in range(3):
    for j in range(i, 3):
        r_cl, r_qu = bp.classical_and_quantum(bp.CoincidenceSetup(a, b, U, e(i, 3), e(j, 3)))
        kind = "bump" if i == j else "dip"
        print(f"u3   {i},{j}  R_cl={r_cl:.3f}  R_qu={r_qu:.3f}  V={bp.visibility(r_cl, r_qu, kind):.3f} ({kind})")

# rotated 3D splitter: the photons avoid the same output (anti-coalescence)
r_cl, r_qu = bp.classical_and_quantum(bp.CoincidenceSetup(a, b, bp.rot3(), a, b))
print(f"rot3 coincidence  R_cl={r_cl:.3f}  R_qu={r_qu:.3f}  bump V={bp.visibility(r_cl, r_qu, 'bump'):.3f}")

# 4D splitter: one phase tunes from bunching to suppression
a, b = e(0, 4), e(3, 4)
for phi in np.linspace(0, np.pi, 5):
    r_cl, r_qu = bp.classical_and_quantum(bp.CoincidenceSetup(a, b, bp.u4(phi), a, b))
    print(f"u4   phi={phi:.3f}  R_cl={r_cl:.4f}  R_qu={r_qu:.4f}")
