"""Free-space propagation, 8-bit phase planes and MPLC transfer matrices."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .modefield import (
    ComplexField,
    GridMismatchError,
    GridSpec,
    ModeBasis,
    build_basis,
    read_pgm,
    spec_from_dict,
    spec_to_dict,
    write_pgm,
)

__all__ = [
    "LEVELS",
    "PhasePlane",
    "MplcDesign",
    "TransferMetrics",
    "propagate",
    "propagate_array",
    "transfer_function",
    "apply_plane",
    "quantize",
    "level_phase",
    "transfer_matrix",
    "save_design",
    "load_design",
]

LEVELS = 256


def transfer_function(grid: GridSpec, wavelength: float, distance: float) -> np.ndarray:
    """Angular-spectrum kernel ``exp(i kz d)`` in unshifted FFT order.

    Evanescent components are zeroed.  The kernel is split into the on-axis
    carrier ``exp(i k d)`` and ``exp(i (kz - k) d)``; the carrier phase is
    reduced modulo one cycle in exact rational arithmetic so that kernels
    for ``a``, ``b`` and ``a + b`` compose to machine precision.
    """
    k = 2 * np.pi / wavelength
    kx = 2 * np.pi * np.fft.fftfreq(grid.nx, grid.dx)
    ky = 2 * np.pi * np.fft.fftfreq(grid.ny, grid.dy)
    KX, KY = np.meshgrid(kx, ky)
    q2 = KX**2 + KY**2
    prop = q2 < k**2
    kz = np.sqrt(np.where(prop, k**2 - q2, 0.0))
    # kz - k without cancellation
    dk = -q2 / (k + kz)
    cycles = Fraction(distance) / Fraction(wavelength)
    carrier = np.exp(2j * np.pi * float(cycles - math.floor(cycles)))
    H = np.zeros(grid.shape, dtype=complex)
    H[prop] = carrier * np.exp(1j * dk[prop] * distance)
    return H


def propagate_array(a: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Apply a precomputed kernel to one field or a stack over the last two axes."""
    return np.fft.ifft2(np.fft.fft2(a, axes=(-2, -1)) * H, axes=(-2, -1))


def propagate(f: ComplexField, distance: float) -> ComplexField:
    if distance == 0:
        return f
    H = transfer_function(f.grid, f.wavelength, distance)
    return f.with_amplitude(propagate_array(f.amplitude, H))


def level_phase(levels) -> np.ndarray:
    return 2 * np.pi * np.asarray(levels, dtype=float) / LEVELS


def quantize_levels(raw_phase) -> np.ndarray:
    wrapped = np.mod(np.asarray(raw_phase, dtype=float), 2 * np.pi)
    return (np.rint(wrapped / (2 * np.pi) * LEVELS).astype(np.int64) % LEVELS).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class PhasePlane:
    """One SLM reflection: 8-bit levels on the grid and a power-amplitude factor.

    ``efficiency`` multiplies the field amplitude, so a value of 0.75 leaves
    0.5625 of the power.
    """

    grid: GridSpec
    levels: np.ndarray
    efficiency: float = 1.0

    def __post_init__(self):
        lv = np.asarray(self.levels)
        if lv.shape != self.grid.shape:
            raise ValueError(f"levels shape {lv.shape} does not match grid {self.grid.shape}")
        if lv.min() < 0 or lv.max() > LEVELS - 1:
            raise ValueError("phase levels must lie in [0, 255]")
        lv = lv.astype(np.uint8)
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @classmethod
    def blank(cls, grid: GridSpec, efficiency: float = 1.0) -> PhasePlane:
        return cls(grid, np.zeros(grid.shape, np.uint8), efficiency)

    def phase(self) -> np.ndarray:
        return level_phase(self.levels)

    def transmission(self) -> np.ndarray:
        return self.efficiency * np.exp(1j * self.phase())


def quantize(raw_phase, grid: Optional[GridSpec] = None, efficiency: float = 1.0) -> PhasePlane:
    """Round a phase map (radians) to the nearest of 256 levels."""
    levels = quantize_levels(raw_phase)
    if grid is None:
        ny, nx = levels.shape
        grid = GridSpec(nx=nx, ny=ny)
    return PhasePlane(grid, levels, efficiency)


def apply_plane(f: ComplexField, plane: PhasePlane) -> ComplexField:
    if f.grid != plane.grid:
        raise GridMismatchError("field and phase plane live on different grids")
    return f.with_amplitude(f.amplitude * plane.transmission())


@dataclass(frozen=True, eq=False)
class MplcDesign:
    """Phase planes separated by free space, with the bases they convert between.

    ``basis_in`` is defined at the first plane; ``basis_out`` at the last plane
    (its fields are the input specs evaluated at ``z = (n - 1) * spacing``).
    ``target`` is the modal unitary the design was optimized for, if known.
    """

    planes: tuple
    spacing: float
    basis_in: ModeBasis
    basis_out: ModeBasis
    wavelengths: tuple
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.planes:
            raise ValueError("design needs at least one plane")
        if not self.spacing > 0:
            raise ValueError("plane spacing must be positive")
        object.__setattr__(self, "planes", tuple(self.planes))
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))

    @property
    def grid(self) -> GridSpec:
        return self.planes[0].grid

    @property
    def length(self) -> float:
        return self.spacing * (len(self.planes) - 1)

    def run(self, amplitudes: np.ndarray, wavelength: float) -> np.ndarray:
        """Send a stack of input amplitudes through every plane."""
        H = transfer_function(self.grid, wavelength, self.spacing)
        a = amplitudes
        for k, plane in enumerate(self.planes):
            if k:
                a = propagate_array(a, H)
            a = a * plane.transmission()
        return a


@dataclass
class TransferMetrics:
    """Modal transfer matrix and loss figures at one wavelength.

    ``transfer[j, i]`` is the amplitude of output mode ``j`` for input ``i``.
    ``in_space_error`` is the share of the non-target power that stays inside
    the ``d``-dimensional output space (crosstalk rather than loss).
    """

    wavelength: float
    transfer: np.ndarray
    efficiencies: np.ndarray
    mode_independent_loss: float
    in_space_error: float
    fidelity: float

    @property
    def mean_efficiency(self) -> float:
        return float(np.mean(self.efficiencies))

    def to_dict(self) -> dict:
        return {
            "wavelength": self.wavelength,
            "transfer": [[[float(v.real), float(v.imag)] for v in row] for row in self.transfer],
            "efficiencies": [float(e) for e in self.efficiencies],
            "mean_efficiency": self.mean_efficiency,
            "mode_independent_loss": self.mode_independent_loss,
            "in_space_error": self.in_space_error,
            "fidelity": self.fidelity,
        }


def _closest_unitary(T: np.ndarray) -> np.ndarray:
    W, _, Vh = np.linalg.svd(T)
    return W @ Vh


def transfer_metrics(T: np.ndarray, wavelength: float, target=None) -> TransferMetrics:
    T = np.asarray(T, dtype=complex)
    U = _closest_unitary(T) if target is None else np.asarray(target, dtype=complex)
    eff = np.sum(np.abs(T) ** 2, axis=0)
    on_target = np.abs(np.sum(U.conj() * T, axis=0)) ** 2
    lost = float(np.mean(1 - on_target))
    in_space = float(np.mean(eff - on_target))
    d = T.shape[0]
    return TransferMetrics(
        wavelength=float(wavelength),
        transfer=T,
        efficiencies=eff,
        mode_independent_loss=float(1 - eff.mean()),
        in_space_error=float(np.clip(in_space / lost, 0, 1)) if lost > 1e-15 else 0.0,
        fidelity=float(abs(np.trace(U.conj().T @ T)) ** 2 / (d * np.sum(np.abs(T) ** 2))),
    )


def transfer_matrix(design: MplcDesign, wavelength: float) -> TransferMetrics:
    """Propagate each input mode through ``design`` and project on the outputs.

    Input fields are re-evaluated at ``wavelength`` from the basis specs; the
    output projectors stay fixed at the design-wavelength fields, as a
    physical mode filter would.
    """
    grid = design.grid
    if design.basis_in.grid != grid or design.basis_out.grid != grid:
        raise GridMismatchError("design bases must share the plane grid")
    if design.basis_in.dim != design.basis_out.dim:
        raise ValueError("input and output bases differ in size")
    if wavelength == design.basis_in.wavelength:
        inputs = design.basis_in.matrix()
    else:
        inputs = build_basis(design.basis_in.specs, grid, wavelength, design.basis_in.z).matrix()
    out = design.run(inputs, wavelength)
    B = design.basis_out.matrix()
    d = design.basis_in.dim
    T = (B.reshape(d, -1).conj() @ out.reshape(d, -1).T) * grid.cell_area
    return transfer_metrics(T, wavelength, design.target)


def _basis_dict(b: ModeBasis) -> dict:
    return {"specs": [spec_to_dict(s) for s in b.specs], "z": b.z, "wavelength": b.wavelength}


def save_design(design: MplcDesign, directory) -> Path:
    """Write ``plane_XX.pgm`` files plus ``design.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for k, plane in enumerate(design.planes):
        name = f"plane_{k:02d}.pgm"
        write_pgm(plane.levels, d / name)
        names.append(name)
    meta = {
        "grid": design.grid.to_dict(),
        "spacing": design.spacing,
        "planes": names,
        "efficiencies": [p.efficiency for p in design.planes],
        "wavelengths": list(design.wavelengths),
        "basis_in": _basis_dict(design.basis_in),
        "basis_out": _basis_dict(design.basis_out),
        "target": None
        if design.target is None
        else [[[float(v.real), float(v.imag)] for v in row] for row in design.target],
    }
    (d / "design.json").write_text(json.dumps(meta, indent=2))
    return d


def load_design(directory) -> MplcDesign:
    d = Path(directory)
    meta = json.loads((d / "design.json").read_text())
    grid = GridSpec(**meta["grid"])
    planes = [
        PhasePlane(grid, read_pgm(d / name), eff)
        for name, eff in zip(meta["planes"], meta["efficiencies"])
    ]

    def basis(b):
        specs = [spec_from_dict(s) for s in b["specs"]]
        return build_basis(specs, grid, b["wavelength"], b["z"])

    target = meta.get("target")
    if target is not None:
        target = np.array([[complex(re, im) for re, im in row] for row in target])
    return MplcDesign(
        planes=tuple(planes),
        spacing=meta["spacing"],
        basis_in=basis(meta["basis_in"]),
        basis_out=basis(meta["basis_out"]),
        wavelengths=tuple(meta["wavelengths"]),
        target=target,
    )
