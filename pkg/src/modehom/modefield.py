"""Laguerre-Gaussian mode fields on sampled transverse grids.

Arrays are stored numpy-style with shape ``(ny, nx)``: rows run along y,
columns along x.  All fields carry the paraxial carrier ``exp(+i k z)`` so
that a field produced by :func:`lg_field` at distance ``z`` agrees with the
angular-spectrum propagation of the same mode from ``z = 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import eval_genlaguerre

__all__ = [
    "GridSpec",
    "ComplexField",
    "LG",
    "Superposition",
    "ModeSpec",
    "ModeBasis",
    "GridTooCoarseError",
    "GridMismatchError",
    "OrthonormalityError",
    "lg_field",
    "mode_field",
    "superpose",
    "inner_product",
    "power",
    "build_basis",
    "azimuthal_spectrum",
    "spec_to_dict",
    "spec_from_dict",
    "write_field_csv",
    "write_pgm",
    "read_pgm",
]


class GridTooCoarseError(ValueError):
    """The grid does not capture the analytic mode power."""


class GridMismatchError(ValueError):
    """Two fields live on different grids or wavelengths."""


class OrthonormalityError(ValueError):
    """A mode basis failed its Gram-matrix check."""

    def __init__(self, message, worst):
        super().__init__(message)
        self.worst = worst


@dataclass(frozen=True)
class GridSpec:
    """Uniform sampling of the transverse plane.

    Parameters
    ----------
    nx, ny : int
        Sample counts, even and at least 16.
    dx, dy : float
        Sample pitch in meters.
    cx, cy : float
        Offset of the grid center in meters.
    """

    nx: int = 256
    ny: int = 256
    dx: float = 25e-6
    dy: float = 25e-6
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 16 or n % 2:
                raise ValueError(f"grid sample counts must be even and >= 16, got {n}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid pitch must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) - self.nx // 2) * self.dx + self.cx
        y = (np.arange(self.ny) - self.ny // 2) * self.dy + self.cy
        return x, y

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.axes()
        return np.meshgrid(x, y)

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        X, Y = self.mesh()
        return np.hypot(X, Y), np.arctan2(Y, X)

    def to_dict(self) -> dict:
        return dict(nx=self.nx, ny=self.ny, dx=self.dx, dy=self.dy, cx=self.cx, cy=self.cy)


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Sampled complex amplitude at one transverse plane."""

    grid: GridSpec
    amplitude: np.ndarray
    wavelength: float

    def __post_init__(self):
        a = np.array(self.amplitude, dtype=complex)
        if a.shape != self.grid.shape:
            raise ValueError(f"amplitude shape {a.shape} does not match grid {self.grid.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitude", a)
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    def power(self) -> float:
        return power(self)

    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def phase(self) -> np.ndarray:
        return np.angle(self.amplitude)

    def with_amplitude(self, amplitude) -> ComplexField:
        return ComplexField(self.grid, amplitude, self.wavelength)

    def __mul__(self, c):
        return self.with_amplitude(self.amplitude * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class LG:
    """Laguerre-Gaussian mode label: OAM ``ell``, radial index ``p``."""

    ell: int
    p: int = 0
    waist: float = 0.6e-3

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("radial index p must be non-negative")
        if not self.waist > 0:
            raise ValueError("waist must be positive")


@dataclass(frozen=True)
class Superposition:
    terms: tuple

    def __post_init__(self):
        terms = tuple((s, complex(c)) for s, c in self.terms)
        if not terms:
            raise ValueError("superposition needs at least one term")
        norm = np.sqrt(sum(abs(c) ** 2 for _, c in terms))
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"superposition coefficients must have unit norm, got {norm!r}")
        object.__setattr__(self, "terms", terms)


ModeSpec = Union[LG, Superposition]


def _check_same(f: ComplexField, g: ComplexField):
    if f.grid != g.grid:
        raise GridMismatchError(f"grid mismatch: {f.grid} vs {g.grid}")
    if f.wavelength != g.wavelength:
        raise GridMismatchError(f"wavelength mismatch: {f.wavelength} vs {g.wavelength}")


def power(f: ComplexField) -> float:
    return float(np.sum(np.abs(f.amplitude) ** 2) * f.grid.cell_area)


def inner_product(f: ComplexField, g: ComplexField) -> complex:
    """Return ``<f, g> = sum(conj(f) * g) dx dy``."""
    _check_same(f, g)
    return complex(np.vdot(f.amplitude, g.amplitude) * f.grid.cell_area)


def lg_field(ell, p, waist, grid, wavelength, z=0.0, *, min_power=0.999) -> ComplexField:
    """Unit-power LG_{p,ell} mode at distance ``z`` from its waist.

    Parameters
    ----------
    ell : int
        Azimuthal (OAM) index.
    p : int
        Radial index, ``p >= 0``.
    waist : float
        Beam waist radius at ``z = 0`` in meters.
    grid : GridSpec
    wavelength : float
        Vacuum wavelength in meters.
    z : float
        Axial position relative to the waist; may be negative.
    min_power : float
        Fraction of the analytic (unit) power the grid must capture.

    Returns
    -------
    ComplexField
        Field renormalized to unit power on the grid.

    Raises
    ------
    GridTooCoarseError
        If the sampled analytic power deviates from 1 by more than
        ``1 - min_power`` (window too small or pitch too coarse).
    """
    if p < 0:
        raise ValueError("radial index p must be non-negative")
    if not waist > 0:
        raise ValueError("waist must be positive")
    L = abs(int(ell))
    k = 2 * np.pi / wavelength
    zr = np.pi * waist**2 / wavelength
    w = waist * np.sqrt(1 + (z / zr) ** 2)
    gouy = np.arctan2(z, zr)
    r, phi = grid.polar()
    rho2 = 2 * r**2 / w**2
    norm = np.sqrt(2 * factorial(p) / (np.pi * factorial(p + L))) / w
    amp = norm * rho2 ** (L / 2) * eval_genlaguerre(p, L, rho2) * np.exp(-(r**2) / w**2)
    phase = ell * phi - (2 * p + L + 1) * gouy + k * z
    if z != 0:
        phase = phase + k * r**2 * z / (2 * (z**2 + zr**2))
    a = amp * np.exp(1j * phase)
    captured = float(np.sum(np.abs(a) ** 2) * grid.cell_area)
    if abs(captured - 1) > 1 - min_power:
        raise GridTooCoarseError(
            f"LG(ell={ell}, p={p}) captures power {captured:.6f} on grid; "
            "enlarge the window or refine the pitch"
        )
    return ComplexField(grid, a / np.sqrt(captured), wavelength)


def superpose(terms: Sequence[tuple[ComplexField, complex]]) -> ComplexField:
    terms = list(terms)
    if not terms:
        raise ValueError("nothing to superpose")
    f0 = terms[0][0]
    out = np.zeros(f0.grid.shape, dtype=complex)
    for f, c in terms:
        _check_same(f0, f)
        out += c * f.amplitude
    return f0.with_amplitude(out)


def mode_field(spec: ModeSpec, grid: GridSpec, wavelength: float, z: float = 0.0) -> ComplexField:
    if isinstance(spec, LG):
        return lg_field(spec.ell, spec.p, spec.waist, grid, wavelength, z)
    return superpose([(mode_field(s, grid, wavelength, z), c) for s, c in spec.terms])


def azimuthal_spectrum(f: ComplexField, harmonics: Sequence[int], n_radial=200, n_angle=256):
    """Fractional power in each azimuthal harmonic, sampled on polar rings.

    The field is bilinearly interpolated onto ``n_radial`` rings; weights are
    ``|c_m(r)|^2 r dr`` summed over rings and normalized by the total.
    """
    from scipy.ndimage import map_coordinates

    g = f.grid
    x, y = g.axes()
    rmax = min(abs(x[0] - g.cx), abs(y[0] - g.cy))
    r = np.linspace(0, rmax, n_radial + 1)[1:]
    th = np.linspace(0, 2 * np.pi, n_angle, endpoint=False)
    R, T = np.meshgrid(r, th, indexing="ij")
    col = (R * np.cos(T) + g.cx - x[0]) / g.dx
    row = (R * np.sin(T) + g.cy - y[0]) / g.dy
    re = map_coordinates(f.amplitude.real, [row, col], order=1)
    im = map_coordinates(f.amplitude.imag, [row, col], order=1)
    c = np.fft.fft(re + 1j * im, axis=1) / n_angle
    weights = np.sum(np.abs(c) ** 2 * r[:, None], axis=0)
    total = weights.sum()
    return {m: float(weights[m % n_angle] / total) for m in harmonics}


@dataclass(frozen=True, eq=False)
class ModeBasis:
    specs: tuple
    fields: tuple
    gram: np.ndarray = field(repr=False)
    z: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.specs)

    @property
    def grid(self) -> GridSpec:
        return self.fields[0].grid

    @property
    def wavelength(self) -> float:
        return self.fields[0].wavelength

    def matrix(self) -> np.ndarray:
        """Stacked field samples, shape ``(d, ny, nx)``."""
        return np.stack([f.amplitude for f in self.fields])

    def coefficients(self, f: ComplexField) -> np.ndarray:
        return np.array([inner_product(b, f) for b in self.fields])


def build_basis(specs, grid, wavelength, z=0.0, tol=1e-3) -> ModeBasis:
    specs = tuple(specs)
    if not specs:
        raise ValueError("basis needs at least one mode")
    if len(set(specs)) != len(specs):
        raise ValueError("basis modes must be distinct")
    fields = tuple(mode_field(s, grid, wavelength, z) for s in specs)
    m = np.stack([f.amplitude.ravel() for f in fields])
    gram = (m.conj() @ m.T) * grid.cell_area
    dev = np.abs(gram - np.eye(len(specs)))
    worst = float(dev.max())
    if worst > tol:
        i, j = np.unravel_index(np.argmax(dev), dev.shape)
        raise OrthonormalityError(
            f"Gram matrix deviates from identity by {worst:.3g} at ({i}, {j})", worst
        )
    gram.setflags(write=False)
    return ModeBasis(specs, fields, gram, z)


def spec_to_dict(spec: ModeSpec) -> dict:
    if isinstance(spec, LG):
        return {"type": "lg", "ell": spec.ell, "p": spec.p, "waist": spec.waist}
    return {
        "type": "superposition",
        "terms": [[spec_to_dict(s), [c.real, c.imag]] for s, c in spec.terms],
    }


def spec_from_dict(d: dict) -> ModeSpec:
    kind = d.get("type", "lg")
    if kind == "lg":
        return LG(int(d["ell"]), int(d.get("p", 0)), float(d.get("waist", LG.waist)))
    if kind == "superposition":
        return Superposition(tuple((spec_from_dict(s), complex(c[0], c[1])) for s, c in d["terms"]))
    raise ValueError(f"unknown mode spec type {kind!r}")


def write_field_csv(f: ComplexField, path) -> None:
    """One ``re,im`` row per sample in row-major order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for v in f.amplitude.ravel():
            w.writerow([repr(float(v.real)), repr(float(v.imag))])


def write_pgm(levels: np.ndarray, path) -> None:
    """Binary 8-bit PGM (P5)."""
    levels = np.asarray(levels)
    if levels.ndim != 2 or levels.min() < 0 or levels.max() > 255:
        raise ValueError("PGM levels must be a 2-D array in [0, 255]")
    ny, nx = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(levels.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    nx, ny = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(data[pos : pos + nx * ny], dtype=np.uint8).reshape(ny, nx).copy()


def intensity_image(f: ComplexField) -> np.ndarray:
    I = f.intensity()
    return np.round(255 * I / I.max()).astype(np.uint8) if I.max() > 0 else np.zeros(I.shape, np.uint8)


def phase_image(f: ComplexField) -> np.ndarray:
    return (np.round(np.mod(f.phase(), 2 * np.pi) / (2 * np.pi) * 256) % 256).astype(np.uint8)
