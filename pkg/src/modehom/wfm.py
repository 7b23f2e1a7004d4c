"""Wavefront matching: design MPLC phase planes for a target modal unitary."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .freespace import (
    MplcDesign,
    PhasePlane,
    TransferMetrics,
    level_phase,
    propagate_array,
    quantize_levels,
    transfer_function,
    transfer_matrix,
)
from .modefield import ModeBasis, build_basis

__all__ = ["WfmConfig", "WfmReport", "target_outputs", "wavefront_match", "bandwidth_scan"]

log = logging.getLogger(__name__)

DIVERGENCE_RUN = 10


@dataclass(frozen=True)
class WfmConfig:
    """Optimizer settings.

    ``phase_reference`` chooses how per-mode overlaps are phase-aligned before
    summation: ``"mode"`` references each mode to its own transmission phase
    (maximizes power per mode, leaves per-input phases free); ``"global"``
    uses one common phase per wavelength, so relative phases of the target
    unitary are enforced too.
    """

    plane_count: int = 3
    spacing: float = 0.8
    sweep_count: int = 100
    wavelengths: tuple = (810e-9,)
    quantize_each_update: bool = True
    report_every: int = 1
    phase_reference: str = "global"
    tol: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self):
        if self.plane_count < 1:
            raise ValueError("plane_count must be >= 1")
        if self.sweep_count < 1:
            raise ValueError("sweep_count must be >= 1")
        if not self.wavelengths:
            raise ValueError("at least one wavelength is required")
        if self.phase_reference not in ("mode", "global"):
            raise ValueError("phase_reference must be 'mode' or 'global'")
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))


@dataclass
class WfmReport:
    efficiency_history: list = field(default_factory=list)
    fidelity_history: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    converged: bool = False
    diverged: bool = False
    sweeps: int = 0

    def to_dict(self) -> dict:
        return {
            "efficiency_history": [float(e) for e in self.efficiency_history],
            "fidelity_history": [float(e) for e in self.fidelity_history],
            "objective_history": [float(e) for e in self.objective_history],
            "metrics": {repr(wl): m.to_dict() for wl, m in self.metrics.items()},
            "converged": self.converged,
            "diverged": self.diverged,
            "sweeps": self.sweeps,
        }


def _check_unitary(U, d):
    U = np.asarray(U, dtype=complex)
    if U.shape != (d, d):
        raise ValueError(f"target is {U.shape}, basis has {d} modes")
    if np.abs(U.conj().T @ U - np.eye(d)).max() > 1e-8:
        raise ValueError("target matrix is not unitary")
    return U


def target_outputs(basis_in: ModeBasis, U) -> ModeBasis:
    """Output field ``j = sum_i U[j, i] * field_i`` (same plane as the inputs).

    Returned as a :class:`ModeBasis` whose ``specs`` are the input specs and
    whose fields are the superpositions; for unitary ``U`` it stays orthonormal.
    """
    U = _check_unitary(U, basis_in.dim)
    m = basis_in.matrix()
    # Column i of U tells where input i must go; the target for input i is
    # sum_j U[j, i] * basis_j.
    out = np.tensordot(U.T, m, axes=1)
    fields = tuple(f.with_amplitude(a) for f, a in zip(basis_in.fields, out))
    flat = out.reshape(basis_in.dim, -1)
    gram = (flat.conj() @ flat.T) * basis_in.grid.cell_area
    gram.setflags(write=False)
    return ModeBasis(basis_in.specs, fields, gram, basis_in.z)


def _output_basis(basis_in: ModeBasis, length: float) -> ModeBasis:
    return build_basis(basis_in.specs, basis_in.grid, basis_in.wavelength, basis_in.z + length)


def wavefront_match(basis_in: ModeBasis, U, cfg: WfmConfig = WfmConfig()):
    """Optimize ``cfg.plane_count`` phase planes realizing ``U`` on ``basis_in``.

    Planes start blank and are updated first-to-last in every sweep.  At plane
    ``k`` the forward fields (inputs run through planes ``< k``) meet the
    backward fields (targets run back through planes ``> k``); the new plane
    phase is ``-arg`` of their phase-referenced overlap summed over modes and
    wavelengths.

    Returns
    -------
    design : MplcDesign
    report : WfmReport
    """
    d = basis_in.dim
    U = _check_unitary(U, d)
    grid = basis_in.grid
    length = cfg.spacing * (cfg.plane_count - 1)
    basis_out = _output_basis(basis_in, length)
    targets = np.tensordot(U.T, basis_out.matrix(), axes=1)
    n = cfg.plane_count
    area = grid.cell_area

    wls = cfg.wavelengths
    inputs = []
    for wl in wls:
        if wl == basis_in.wavelength:
            inputs.append(basis_in.matrix())
        else:
            inputs.append(build_basis(basis_in.specs, grid, wl, basis_in.z).matrix())
    H = [transfer_function(grid, wl, cfg.spacing) for wl in wls]
    Hb = [h.conj() for h in H]

    phases = [np.zeros(grid.shape) for _ in range(n)]
    amp = cfg.efficiency

    def trans(k):
        return amp * np.exp(1j * phases[k])

    report = WfmReport()
    decreasing = 0
    for sweep in range(cfg.sweep_count):
        # backward fields just after each plane, per wavelength
        bwd = []
        for w in range(len(wls)):
            b = [None] * n
            b[n - 1] = targets
            for k in range(n - 2, -1, -1):
                b[k] = propagate_array(b[k + 1] * np.conj(trans(k + 1)), Hb[w])
            bwd.append(b)
        fwd = [inputs[w] for w in range(len(wls))]
        for k in range(n):
            o = np.zeros(grid.shape, dtype=complex)
            t = trans(k)
            for w in range(len(wls)):
                prod = np.conj(bwd[w][k]) * fwd[w]
                c = np.sum(prod * t, axis=(-2, -1))
                if cfg.phase_reference == "mode":
                    ref = np.exp(-1j * np.angle(c))
                    o += np.tensordot(ref, prod, axes=1)
                else:
                    o += np.exp(-1j * np.angle(c.sum())) * prod.sum(axis=0)
            new = -np.angle(o)
            if cfg.quantize_each_update:
                new = level_phase(quantize_levels(new))
            phases[k] = new
            t = trans(k)
            for w in range(len(wls)):
                a = fwd[w] * t
                fwd[w] = propagate_array(a, H[w]) if k < n - 1 else a
        # fwd now holds the outputs after the last plane
        effs, fids, objs = [], [], []
        B = basis_out.matrix().reshape(d, -1).conj()
        for w in range(len(wls)):
            T = (B @ fwd[w].reshape(d, -1).T) * area
            c = np.sum(U.conj() * T, axis=0)
            effs.append(np.mean(np.sum(np.abs(T) ** 2, axis=0)))
            fids.append(abs(c.sum()) ** 2 / (d * np.sum(np.abs(T) ** 2)))
            objs.append(np.abs(c).sum() / d if cfg.phase_reference == "mode" else abs(c.sum()) / d)
        eff = float(np.mean(effs))
        obj = float(np.mean(objs))
        # the quantity the plane updates climb; raw efficiency may trade off against phase accuracy
        if report.objective_history and obj < report.objective_history[-1]:
            decreasing += 1
        else:
            decreasing = 0
        report.efficiency_history.append(eff)
        report.fidelity_history.append(float(np.mean(fids)))
        report.objective_history.append(obj)
        report.sweeps = sweep + 1
        if cfg.report_every and (sweep + 1) % cfg.report_every == 0:
            log.debug("sweep %d: efficiency %.6f", sweep + 1, eff)
        if decreasing > DIVERGENCE_RUN:
            report.diverged = True
            break
        if cfg.tol and len(report.objective_history) > 1:
            if abs(obj - report.objective_history[-2]) < cfg.tol:
                report.converged = True
                break

    planes = tuple(PhasePlane(grid, quantize_levels(p), cfg.efficiency) for p in phases)
    design = MplcDesign(planes, cfg.spacing, basis_in, basis_out, wls, U)
    report.metrics = {wl: transfer_matrix(design, wl) for wl in wls}
    if not report.diverged and not report.converged:
        h = report.objective_history
        report.converged = len(h) < 2 or abs(h[-1] - h[-2]) < 1e-4
    return design, report


def bandwidth_scan(design: MplcDesign, wavelengths: Sequence[float]) -> dict:
    """Mean efficiency of ``design`` at each wavelength."""
    table = {}
    for wl in wavelengths:
        if not wl > 0:
            raise ValueError("wavelengths must be positive")
        table[float(wl)] = transfer_matrix(design, wl).mean_efficiency
    return table
