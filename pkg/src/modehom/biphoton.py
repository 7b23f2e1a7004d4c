"""Two-photon Fock-state algebra over a handful of spatial modes.

Conventions
-----------
* Modes are ordered by ascending OAM: ``(-1, +1)`` in 2D, ``(-1, 0, +1)`` in
  3D, ``(-2, -1, +1, +2)`` in 4D.
* A unitary ``U`` acts on single-photon coefficient column vectors; column
  ``i`` is the image of input mode ``i``.
* Coincidence probabilities count detection events, not ordered detector
  assignments: for ``p != q`` the rate is the probability of finding one
  photon in ``p`` and the other in ``q``; for ``p == q`` it is the
  probability that both occupy ``p``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnitaryMatrix",
    "SinglePhotonState",
    "TwoPhotonState",
    "CoincidenceSetup",
    "ProjectorError",
    "u2",
    "u3",
    "r3",
    "rot3",
    "u4",
    "named_unitary",
    "transform_pair",
    "coincidence_rate",
    "classical_and_quantum",
    "visibility",
    "named_states",
    "basis_state",
    "pair_probability",
    "detection_table",
    "unitary_to_json",
    "unitary_from_json",
    "state_to_json",
    "state_from_json",
]

ORTHO_TOL = 1e-10


class ProjectorError(ValueError):
    """Projector pair is neither identical nor orthogonal."""


def _as_unitary(m, tol=1e-10) -> np.ndarray:
    m = np.array(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"unitary must be square, got shape {m.shape}")
    defect = np.abs(m.conj().T @ m - np.eye(m.shape[0])).max()
    if defect >= tol:
        raise ValueError(f"matrix is not unitary (defect {defect:.3g})")
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _as_unitary(self.entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __matmul__(self, other):
        return self.entries @ np.asarray(other)

    def defect(self) -> float:
        e = self.entries
        return float(np.abs(e.conj().T @ e - np.eye(self.dim)).max())


@dataclass(frozen=True, eq=False)
class SinglePhotonState:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        if abs(np.linalg.norm(c) - 1) > 1e-12:
            raise ValueError(f"single-photon state must have unit norm, got {np.linalg.norm(c)!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coeffs, dtype=dtype)

    def overlap(self, other) -> complex:
        return complex(np.vdot(self.coeffs, np.asarray(other)))


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    """Symmetric amplitude matrix ``C``.

    The Fock amplitude of ``|1_i 1_j>`` (``i < j``) is ``2 C[i, j]`` and that of
    ``|2_k>`` is ``sqrt(2) C[k, k]``; these square-sum to one.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if np.abs(c - c.T).max() > 1e-12:
            raise ValueError("two-photon amplitude matrix must be symmetric")
        if abs(2 * np.sum(np.abs(c) ** 2) - 1) > 1e-12:
            raise ValueError("two-photon state is not normalized")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def fock(self) -> dict:
        """Map occupation tuples such as ``(1, 0, 1)`` to amplitudes."""
        d = self.dim
        out = {}
        for i, j in itertools.combinations_with_replacement(range(d), 2):
            n = [0] * d
            n[i] += 1
            n[j] += 1
            amp = np.sqrt(2) * self.coeffs[i, i] if i == j else 2 * self.coeffs[i, j]
            out[tuple(n)] = complex(amp)
        return out

    def probabilities(self) -> dict:
        return {k: abs(v) ** 2 for k, v in self.fock().items()}

    def project(self, p, q) -> float:
        """Probability of one photon in ``p`` and one in ``q`` (both in ``p`` if equal)."""
        p, q = np.asarray(p, dtype=complex), np.asarray(q, dtype=complex)
        amp = p.conj() @ self.coeffs @ q.conj()
        pq = np.vdot(p, q)
        if abs(pq) < ORTHO_TOL:
            return float(4 * abs(amp) ** 2)
        if abs(pq - 1) < ORTHO_TOL:
            return float(2 * abs(amp) ** 2)
        raise ProjectorError("projectors must be identical or orthogonal")


@dataclass(frozen=True, eq=False)
class CoincidenceSetup:
    """Inputs ``u, v`` sent through ``U`` and projected on ``p, q``.

    ``gamma`` is the overlap of the photons' remaining (temporal, spectral)
    wavepackets: 0 for distinguishable, 1 for identical photons.
    """

    u: np.ndarray
    v: np.ndarray
    U: np.ndarray
    p: np.ndarray
    q: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("u", "v", "p", "q"):
            x = np.array(np.asarray(getattr(self, name)), dtype=complex).ravel()
            if abs(np.linalg.norm(x) - 1) > 1e-10:
                raise ValueError(f"{name} must be a unit vector")
            object.__setattr__(self, name, x)
        U = np.asarray(self.U, dtype=complex)
        object.__setattr__(self, "U", U)
        d = U.shape[0]
        if any(getattr(self, n).size != d for n in ("u", "v", "p", "q")):
            raise ValueError("state dimensions do not match the unitary")
        if abs(np.vdot(self.u, self.v)) > 1e-10:
            raise ValueError("input photons must occupy orthogonal modes")
        pq = abs(np.vdot(self.p, self.q))
        if not (pq < ORTHO_TOL or abs(pq - 1) < ORTHO_TOL):
            raise ProjectorError("projectors must be identical or orthogonal")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")

    def with_gamma(self, gamma) -> CoincidenceSetup:
        return CoincidenceSetup(self.u, self.v, self.U, self.p, self.q, gamma)

    @property
    def same_projector(self) -> bool:
        return abs(np.vdot(self.p, self.q)) > 0.5


def u2() -> UnitaryMatrix:
    return UnitaryMatrix(np.array([[1, -1], [1, 1]]) / np.sqrt(2))


def u3() -> UnitaryMatrix:
    w = np.exp(2j * np.pi / 3)
    return UnitaryMatrix(np.array([[1, w**2, w], [1, w, w**2], [1, 1, 1]]) / np.sqrt(3))


def r3() -> np.ndarray:
    s2 = np.sqrt(2)
    h = 2 * np.sqrt(1.5)
    return np.array([[s2 + 1, s2 - 1, -h], [s2 - 2, s2 + 2, 0], [s2 + 1, s2 - 1, h]]) / (2 * np.sqrt(3))


# the rotated unitary was prepared in the mode order (-1, +1, 0)
_ROT3_ORDER = [0, 2, 1]


def rot3(prepared_order: bool = True) -> UnitaryMatrix:
    """Unbalanced 3D splitter ``U3 @ R3``.

    With ``prepared_order`` (default) the product is taken in the mode order
    ``(-1, +1, 0)`` used when the device was built, then re-expressed in the
    ascending order ``(-1, 0, +1)``.  Pass ``False`` to get the bare product in
    ascending order.
    """
    m = u3().entries @ r3()
    if prepared_order:
        P = np.eye(3)[_ROT3_ORDER]
        m = P @ m @ P.T
    return UnitaryMatrix(m)


def _splitter_on(pair, d=4) -> np.ndarray:
    m = np.eye(d, dtype=complex)
    m[np.ix_(pair, pair)] = u2().entries
    return m


def u4(phi: float) -> UnitaryMatrix:
    """Balanced 4D splitter with one internal phase.

    Two layers of 2x2 splitters, on mode pairs (1, 2), (3, 4) and then
    (1, 3), (2, 4), with ``exp(i phi)`` on mode 4 in between.  All entries
    have modulus 1/2 for every ``phi``.
    """
    D = np.diag([1, 1, 1, np.exp(1j * phi)])
    first = _splitter_on([0, 1]) @ _splitter_on([2, 3])
    second = _splitter_on([0, 2]) @ _splitter_on([1, 3])
    return UnitaryMatrix(second @ D @ first)


def named_unitary(name: str) -> UnitaryMatrix:
    """Resolve ``u2``, ``u3``, ``rot3`` or ``u4:<phi>``."""
    if name == "u2":
        return u2()
    if name == "u3":
        return u3()
    if name == "rot3":
        return rot3()
    if name.startswith("u4:"):
        return u4(float(name[3:]))
    if name == "u4":
        return u4(0.0)
    raise KeyError(f"unknown unitary {name!r}")


def basis_state(i: int, d: int) -> SinglePhotonState:
    return SinglePhotonState(np.eye(d)[i])


def transform_pair(U, u, v) -> TwoPhotonState:
    """Send one photon in ``u`` and one in ``v`` through ``U``.

    Builds ``C = (a b^T + b a^T) / 2`` with ``a = U u`` and ``b = U v``,
    normalizes it, and fixes the global phase so the largest Fock amplitude is
    real and positive (first one wins on ties).
    """
    U = np.asarray(U, dtype=complex)
    u, v = np.asarray(u, dtype=complex), np.asarray(v, dtype=complex)
    if U.shape[0] != u.size or U.shape[0] != v.size:
        raise ValueError("state dimensions do not match the unitary")
    a, b = U @ u, U @ v
    C = 0.5 * (np.outer(a, b) + np.outer(b, a))
    C = C / np.sqrt(2 * np.sum(np.abs(C) ** 2))
    d = C.shape[0]
    iu = np.triu_indices(d)
    amps = np.where(iu[0] == iu[1], np.sqrt(2), 2.0) * C[iu]
    mags = np.abs(amps)
    k = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
    C = C * np.exp(-1j * np.angle(amps[k]))
    return TwoPhotonState(C)


def coincidence_rate(setup: CoincidenceSetup) -> float:
    """Coincidence probability with partial distinguishability ``gamma``.

    With ``A = <p|U u><q|U v>`` and ``B = <p|U v><q|U u>``:
    orthogonal projectors give ``|A|^2 + |B|^2 + 2 gamma Re(conj(A) B)``;
    identical projectors give ``(1 + gamma) |A|^2``.
    """
    a, b = setup.U @ setup.u, setup.U @ setup.v
    pa, pb = np.vdot(setup.p, a), np.vdot(setup.p, b)
    qa, qb = np.vdot(setup.q, a), np.vdot(setup.q, b)
    A = pa * qb
    if setup.same_projector:
        return float((1 + setup.gamma) * abs(A) ** 2)
    B = pb * qa
    return float(abs(A) ** 2 + abs(B) ** 2 + 2 * setup.gamma * (np.conj(A) * B).real)


def pair_probability(U, u, v, p, q) -> float:
    """Indistinguishable-photon rate from the full symmetric two-photon state."""
    return transform_pair(U, u, v).project(p, q)


def detection_table(U, u, v, a, b, gamma: float = 1.0) -> np.ndarray:
    """Coincidence probabilities after splitting the pair onto two detectors.

    ``table[i, j]`` is the probability that detector 1 finds the photon in
    outcome ``i`` and detector 2 in outcome ``j``, with ``(a, b)`` an
    orthonormal measurement basis.  A 50:50 split separates a same-mode pair
    with probability 1/2, and sends each of two different-mode photons to a
    given detector with probability 1/2.
    """
    outcomes = (a, b)
    t = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            r = coincidence_rate(CoincidenceSetup(u, v, U, outcomes[i], outcomes[j], gamma))
            t[i, j] = r / 2 if i == j else r / 4
    return t


def classical_and_quantum(setup: CoincidenceSetup) -> tuple[float, float]:
    return coincidence_rate(setup.with_gamma(0.0)), coincidence_rate(setup.with_gamma(1.0))


def visibility(r_cl: float, r_qu: float, kind: str = "dip") -> float:
    """Fractional interference contrast.

    ``dip``: ``(r_cl - r_qu) / r_cl``; ``bump``: ``(r_qu - r_cl) / r_cl``.
    """
    if r_cl <= 0:
        raise ValueError("classical rate must be positive")
    if kind == "dip":
        return (r_cl - r_qu) / r_cl
    if kind == "bump":
        return (r_qu - r_cl) / r_cl
    raise ValueError(f"kind must be 'dip' or 'bump', got {kind!r}")


def named_states() -> dict:
    """Catalog of the single-photon states used in the experiments.

    Keys: ``D``, ``A``, ``H``, ``V`` (2D, order ``(-1, +1)``); ``MUB2_2``,
    ``MUB2_3``, ``A1``, ``A2`` (3D, order ``(-1, 0, +1)``); plus basis vectors
    ``l-1``, ``l+1`` (2D) and ``3d:l-1``, ``3d:l0``, ``3d:l+1`` (3D), and
    ``4d:l-2`` ... ``4d:l+2``.
    """
    s2, s3 = np.sqrt(2), np.sqrt(3)
    w = np.exp(2j * np.pi / 3)
    cat = {
        "D": [1 / s2, 1j / s2],
        "A": [1 / s2, -1j / s2],
        "H": [1 / s2, 1 / s2],
        "V": [1 / s2, -1 / s2],
        "l-1": [1, 0],
        "l+1": [0, 1],
        "MUB2_2": np.array([w, w**2, 1]) / s3,
        "MUB2_3": np.array([w, 1, w**2]) / s3,
        "A1": np.array([s2 + 1, s2 + 1, s2 - 2]) / (2 * s3),
        "A2": np.array([s2 - 1, s2 - 1, s2 + 2]) / (2 * s3),
    }
    for i, ell in enumerate((-1, 0, 1)):
        cat[f"3d:l{ell:+d}" if ell else "3d:l0"] = np.eye(3)[i]
    for i, ell in enumerate((-2, -1, 1, 2)):
        cat[f"4d:l{ell:+d}"] = np.eye(4)[i]
    return {k: SinglePhotonState(np.asarray(v)) for k, v in cat.items()}


def _pairs(m) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(m)]


def unitary_to_json(U) -> str:
    return json.dumps({"matrix": _pairs(np.asarray(U))})


def _parse_matrix(obj) -> np.ndarray:
    rows = obj["matrix"] if isinstance(obj, dict) else obj
    return np.array([[complex(*z) if isinstance(z, (list, tuple)) else complex(z) for z in row] for row in rows])


def unitary_from_json(text: str) -> UnitaryMatrix:
    return UnitaryMatrix(_parse_matrix(json.loads(text)))


def state_to_json(s) -> str:
    return json.dumps({"coeffs": _pairs(np.asarray(s))[0]})


def state_from_json(text: str) -> SinglePhotonState:
    obj = json.loads(text)
    return SinglePhotonState(np.array([complex(*z) for z in obj["coeffs"]]))
