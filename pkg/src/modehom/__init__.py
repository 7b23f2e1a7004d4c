"""Simulation of two-photon interference in spatial-mode splitters.

Submodules
----------
modefield   LG mode fields on a sampled grid
freespace   angular-spectrum propagation, phase planes, MPLC transfer matrices
wfm         wavefront-matching design of phase planes
biphoton    two-photon states, modesplitter unitaries, coincidence rates
scanlab     delay-scan synthesis, corrections, fitting and the witness
cli         batch front end
"""

__version__ = "0.1.0"
