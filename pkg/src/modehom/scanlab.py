"""HOM delay scans: synthesis, count corrections, curve fitting, witnesses.

Delays are in seconds and rates in counts per second throughout; a
:class:`ScanRecord` stores raw counts per dwell period.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "C_LIGHT",
    "D1_DEFAULT",
    "D2_DEFAULT",
    "ScanModel",
    "ScanRecord",
    "CorrectedRates",
    "FitResult",
    "WitnessResult",
    "DegenerateScanError",
    "gamma_of_delay",
    "expected_rate",
    "synthesize",
    "correct_accidentals",
    "correct_drift",
    "corrected_rates",
    "fit_scan",
    "witness",
    "witness_from_counts",
    "correlation_visibility",
    "singles_dip_ratio",
    "model_from_rates",
    "write_record",
    "read_record",
    "write_corrected_csv",
]

C_LIGHT = 299_792_458.0
# first sinc zero at 0.2 mm of path difference
D1_DEFAULT = math.pi * C_LIGHT / 0.2e-3
D2_DEFAULT = D1_DEFAULT / 3


class DegenerateScanError(ValueError):
    """The scan carries no curvature to pin down the interference shape."""


def gamma_of_delay(dt, d1=D1_DEFAULT, d2=D2_DEFAULT):
    """Photon indistinguishability ``sinc(d1 dt) exp(-(d2 dt)^2)``, unnormalized sinc."""
    x = d1 * np.asarray(dt, dtype=float)
    return np.sinc(x / np.pi) * np.exp(-((d2 * np.asarray(dt, dtype=float)) ** 2))


@dataclass(frozen=True)
class ScanModel:
    """Interference curve of one delay scan.

    ``sign`` is ``"dip"`` or ``"bump"``; ``offset`` shifts the zero-delay
    point.  The delay grid runs from ``-span`` to ``+span`` in ``step``.
    """

    r_cl: float
    visibility: float
    sign: str = "dip"
    d1: float = D1_DEFAULT
    d2: float = D2_DEFAULT
    slope: float = 0.0
    offset: float = 0.0
    span: float = 2e-12
    step: float = 0.1e-12

    def __post_init__(self):
        if not self.r_cl > 0:
            raise ValueError("classical rate must be positive")
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")
        if self.d2 < 0:
            raise ValueError("d2 must be non-negative")
        if self.sign not in ("dip", "bump"):
            raise ValueError("sign must be 'dip' or 'bump'")

    def delays(self) -> np.ndarray:
        n = int(round(self.span / self.step))
        return np.arange(-n, n + 1) * self.step


def expected_rate(model: ScanModel, dt):
    dt = np.asarray(dt, dtype=float) - model.offset
    s = -1.0 if model.sign == "dip" else 1.0
    return model.r_cl * (1 + s * model.visibility * gamma_of_delay(dt, model.d1, model.d2)) + model.slope * dt


def model_from_rates(r_cl: float, r_qu: float, pair_rate: float, **kw) -> ScanModel:
    """Scan model whose zero-delay contrast reproduces ``r_cl -> r_qu``.

    ``r_cl``/``r_qu`` are coincidence probabilities (e.g. from
    :func:`modehom.biphoton.coincidence_rate`), ``pair_rate`` the number of
    pairs per second reaching the projectors.
    """
    if r_cl <= 0:
        raise ValueError("classical probability must be positive")
    sign = "bump" if r_qu > r_cl else "dip"
    v = min(abs(r_qu - r_cl) / r_cl, 1.0)
    return ScanModel(r_cl=pair_rate * r_cl, visibility=v, sign=sign, **kw)


@dataclass(frozen=True, eq=False)
class ScanRecord:
    delays: np.ndarray
    coincidences: np.ndarray
    singles1: np.ndarray
    singles2: np.ndarray
    dwell: float = 1.0
    window: float = 1e-9

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, n), dtype=float) for n in ("delays", "coincidences", "singles1", "singles2")]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise ValueError("scan arrays must be 1-D and of equal length")
        if any((a < 0).any() for a in arrs[1:]):
            raise ValueError("counts must be non-negative")
        for n, a in zip(("delays", "coincidences", "singles1", "singles2"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, n, a)
        if not self.dwell > 0:
            raise ValueError("dwell time must be positive")

    def __len__(self):
        return self.delays.size


def synthesize(
    model: ScanModel,
    singles=(2.0e4, 2.0e4),
    dwell: float = 10.0,
    seed: Optional[int] = 0,
    *,
    window: float = 1e-9,
    noise: bool = True,
    drift: float = 0.0,
    singles_coupling: float = 0.0,
    delays=None,
) -> ScanRecord:
    """Draw one scan from counting statistics.

    Parameters
    ----------
    singles : (float, float)
        Mean single-photon rates of the two detectors.
    drift : float
        Fractional change of source brightness across the scan (applied
        linearly to singles and true coincidences alike).
    singles_coupling : float
        Fraction of the interference change in coincidences that also shows
        up in each singles channel (0.5 for non-number-resolving detectors).
    noise : bool
        ``False`` returns the mean counts instead of Poisson draws.
    """
    dt = model.delays() if delays is None else np.asarray(delays, dtype=float)
    if dt.size > 1:
        ramp = 1 + drift * (dt - dt.mean()) / (dt.max() - dt.min())
    else:
        ramp = np.ones_like(dt)
    interference = expected_rate(model, dt) - model.r_cl - model.slope * (dt - model.offset)
    s1 = (singles[0] + singles_coupling * interference) * ramp
    s2 = (singles[1] + singles_coupling * interference) * ramp
    true = expected_rate(model, dt) * ramp
    mean_c = np.clip((true + s1 * s2 * window) * dwell, 0, None)
    mean_s1 = np.clip(s1 * dwell, 0, None)
    mean_s2 = np.clip(s2 * dwell, 0, None)
    if noise:
        rng = np.random.default_rng(seed)
        c = rng.poisson(mean_c)
        n1 = rng.poisson(mean_s1)
        n2 = rng.poisson(mean_s2)
    else:
        c, n1, n2 = mean_c, mean_s1, mean_s2
    return ScanRecord(dt, c, n1, n2, dwell, window)


@dataclass(frozen=True, eq=False)
class CorrectedRates:
    delays: np.ndarray
    rates: np.ndarray
    sigma: np.ndarray
    negative: np.ndarray

    @property
    def any_negative(self) -> bool:
        return bool(self.negative.any())


def _raw(rec: ScanRecord) -> CorrectedRates:
    rates = rec.coincidences / rec.dwell
    # counting variance floored at one count per point
    sigma = np.sqrt(np.maximum(rec.coincidences, 1.0)) / rec.dwell
    return CorrectedRates(rec.delays, rates, sigma, rates < 0)


def correct_accidentals(rec: ScanRecord, rates: Optional[CorrectedRates] = None) -> CorrectedRates:
    """Subtract ``S1 * S2 * window`` from the coincidence rate at every point."""
    base = _raw(rec) if rates is None else rates
    acc = (rec.singles1 / rec.dwell) * (rec.singles2 / rec.dwell) * rec.window
    r = base.rates - acc
    return CorrectedRates(rec.delays, r, base.sigma, r < 0)


def correct_drift(rec: ScanRecord, rates: Optional[CorrectedRates] = None) -> CorrectedRates:
    """Rescale each point by the scan-mean singles level over the local one.

    The singles level is the geometric mean of the two channels.
    """
    base = _raw(rec) if rates is None else rates
    level = np.sqrt(rec.singles1 * rec.singles2)
    if (level <= 0).any():
        return base
    factor = level.mean() / level
    r = base.rates * factor
    return CorrectedRates(rec.delays, r, base.sigma * factor, r < 0)


def corrected_rates(rec: ScanRecord, accidentals=True, drift=True) -> CorrectedRates:
    r = _raw(rec)
    if accidentals:
        r = correct_accidentals(rec, r)
    if drift:
        r = correct_drift(rec, r)
    return r


@dataclass
class FitResult:
    """Fit of the interference curve to one scan.

    ``values`` and ``errors`` are keyed by ``r_cl, visibility, d1, d2,
    slope, offset``.  ``visibility`` is reported clamped to [-0.05, 1.05];
    ``out_of_range`` marks a clamp.
    """

    values: dict
    errors: dict
    sign: str
    chi2: float
    dof: int
    converged: bool
    out_of_range: bool = False
    message: str = ""
    shape_fixed: bool = False

    @property
    def visibility(self) -> float:
        return self.values["visibility"]

    @property
    def visibility_error(self) -> float:
        return self.errors["visibility"]

    def model(self, span=2e-12, step=0.1e-12) -> ScanModel:
        v = self.values
        return ScanModel(
            r_cl=v["r_cl"],
            visibility=float(np.clip(v["visibility"], 0, 1)),
            sign=self.sign,
            d1=v["d1"],
            d2=v["d2"],
            slope=v["slope"],
            offset=v["offset"],
            span=span,
            step=step,
        )

    def to_dict(self) -> dict:
        return {
            "values": {k: float(x) for k, x in self.values.items()},
            "errors": {k: float(x) for k, x in self.errors.items()},
            "sign": self.sign,
            "chi2": float(self.chi2),
            "dof": int(self.dof),
            "converged": bool(self.converged),
            "out_of_range": bool(self.out_of_range),
            "message": self.message,
            "shape_fixed": bool(self.shape_fixed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> FitResult:
        return cls(**d)


_NAMES = ("r_cl", "visibility", "d1", "d2", "slope", "offset")


def _guess_sign(t, y) -> str:
    n = len(y)
    wings = np.r_[y[: max(n // 5, 1)], y[-max(n // 5, 1) :]]
    centre = y[np.argsort(np.abs(t))[: max(n // 10, 1)]]
    return "bump" if centre.mean() > wings.mean() else "dip"


def fit_scan(
    rec: ScanRecord,
    sign: Optional[str] = None,
    *,
    shape: Optional[tuple] = None,
    offset: Optional[float] = None,
    accidentals: bool = True,
    drift: bool = True,
    rates: Optional[CorrectedRates] = None,
    n_starts: int = 5,
    reweight: int = 2,
) -> FitResult:
    """Weighted least-squares fit of the interference curve.

    Parameters
    ----------
    sign : {"dip", "bump"}, optional
        Direction of the interference feature; guessed from the data if
        omitted.
    shape : (d1, d2), optional
        Hold the indistinguishability profile fixed (e.g. from a source
        calibration).  Required when the scan has no visible interference.
    rates : CorrectedRates, optional
        Pre-corrected data; overrides ``accidentals``/``drift``.
    n_starts : int
        Number of starting offsets tried across the central part of the scan.
    reweight : int
        Extra passes that take each point's counting variance from the
        fitted model instead of the observed count (floored at one count).
        Observed-count weights pull low-count fits toward the dip bottom;
        only used when the rates come from ``rec``.

    Raises
    ------
    DegenerateScanError
        Free-shape fit of a scan whose curvature cannot determine the shape.
    """
    if len(rec) < 8:
        raise ValueError("need at least 8 delay points")
    data = rates if rates is not None else corrected_rates(rec, accidentals, drift)
    t_raw, y_raw, s_raw = data.delays, data.rates, data.sigma
    tc = 0.5 * (t_raw.max() + t_raw.min())
    T = 0.5 * (t_raw.max() - t_raw.min())
    if T <= 0:
        raise ValueError("delays must span a range")
    t = (t_raw - tc) / T
    Y = max(np.median(np.abs(y_raw)), 1e-300)
    y, s = y_raw / Y, s_raw / Y
    if sign is None:
        sign = _guess_sign(t, y)
    sg = -1.0 if sign == "dip" else 1.0

    n = len(y)
    k = max(n // 5, 2)
    wings = np.r_[np.arange(k), np.arange(n - k, n)]
    slope0, base0 = np.polyfit(t[wings], y[wings], 1)
    ext = int(np.argmax(sg * y))
    depth = sg * (y[ext] - (base0 + slope0 * t[ext]))
    v0 = float(np.clip(depth / max(base0, 1e-12), 0.05, 1.0))
    if shape is None:
        half = base0 + sg * 0.5 * depth
        inside = np.flatnonzero(sg * (y - half) > 0)
        width = max((t[inside].max() - t[inside].min()) / 2 if inside.size > 1 else 4 / n, 2 / n)
        d1_0 = 1.9 / width

    # parameters: r_cl, V, d1, d2^2, slope, offset (scaled units); the
    # Gaussian width enters squared so its gradient survives at d2 = 0
    def model(p):
        r, v, d1, d2sq, sl, t0 = p
        x = t - t0
        return r * (1 + sg * v * np.sinc(d1 * x / np.pi) * np.exp(np.minimum(-d2sq * x**2, 50.0))) + sl * x

    def solve(guesses, free, fixed, sig):
        def resid(q):
            p = fixed.copy()
            p[free] = q
            return (model(p) - y) / sig

        best = None
        for p0 in guesses:
            try:
                sol = least_squares(resid, np.asarray(p0)[free], method="lm", x_scale="jac", max_nfev=4000)
            except ValueError:
                continue
            if best is None or sol.cost < best.cost:
                best = sol
        if best is not None:
            best.full = fixed.copy()
            best.full[free] = best.x
        return best

    def run(guesses, free, fixed):
        best = solve(guesses, free, fixed, s)
        if best is None:
            raise RuntimeError("fit failed for every starting point")
        if rates is None:
            # each corrected rate is linear in its raw count; refit with the
            # variance the model predicts for that count
            per_count = s / np.sqrt(np.maximum(rec.coincidences, 1.0))
            for _ in range(reweight):
                pred = rec.coincidences + (model(best.full) - y) / per_count
                sig = per_count * np.sqrt(np.maximum(pred, 1.0))
                sol = solve([best.full], free, fixed, sig)
                if sol is None:
                    break
                best = sol
        return best

    def conditioning(best):
        JTJ = best.jac.T @ best.jac
        scale = np.sqrt(np.diag(JTJ))
        if not (scale > 0).all():
            return JTJ, np.inf, None
        N = JTJ / np.outer(scale, scale)
        w, vec = np.linalg.eigh(N)
        return JTJ, (w[-1] / w[0] if w[0] > 0 else np.inf), vec[:, 0]

    fixed = np.zeros(6)
    free = np.ones(6, bool)
    offsets = np.unique(t[ext] + (np.linspace(-0.25, 0.25, n_starts) if n_starts > 1 else [0.0]))
    if shape is None:
        # a noisy half-width can send the fit into a one-point spike, so a few
        # broader widths are tried as well
        widths = np.unique([d1_0, 4.0, 8.0, 16.0])
        guesses = [[base0, v0, w, (w / 3) ** 2, slope0, t0] for t0 in offsets for w in widths]
    else:
        fixed[2], fixed[3] = shape[0] * T, (shape[1] * T) ** 2
        free[2:4] = False
        guesses = [[base0, v0, fixed[2], fixed[3], slope0, t0] for t0 in offsets]
    if offset is not None:
        fixed[5] = (offset - tc) / T
        free[5] = False
        guesses = [list(g) for g in dict.fromkeys(tuple(g[:5]) + (fixed[5],) for g in guesses)]
    best = run(guesses, free, fixed)
    JTJ, cond, null = conditioning(best)
    note = ""
    if cond > 1e12 and shape is None:
        # sinc is even in d1: near d1 = 0 it only adds curvature that d2^2
        # already supplies, so the pair trades off while V stays determined
        if null is not None and np.sum(null[2:4] ** 2) > 0.99:
            free[2], fixed[2] = False, 0.0
            best = run([best.full], free, fixed)
            JTJ, cond, null = conditioning(best)
            note = "; d1 held at 0 (pure Gaussian envelope)"
        if cond > 1e12:
            raise DegenerateScanError(
                "scan has no usable curvature; fix the shape (d1, d2) from a calibration"
            )
    cov = np.linalg.pinv(JTJ) if cond > 1e12 else np.linalg.inv(JTJ)
    err = np.zeros(6)
    err[free] = np.sqrt(np.clip(np.diag(cov), 0, None))
    r, v, d1, d2sq, sl, t0 = best.full
    d2 = math.sqrt(max(d2sq, 0.0))
    ed2 = err[3] / (2 * d2) if d2 > 0 else math.sqrt(err[3])
    values = {
        "r_cl": r * Y,
        "visibility": v,
        "d1": abs(d1) / T,
        "d2": d2 / T,
        "slope": sl * Y / T,
        "offset": t0 * T + tc,
    }
    errors = {
        "r_cl": err[0] * Y,
        "visibility": err[1],
        "d1": err[2] / T,
        "d2": ed2 / T,
        "slope": err[4] * Y / T,
        "offset": err[5] * T,
    }
    out = not (-0.05 <= v <= 1.05)
    values["visibility"] = float(np.clip(v, -0.05, 1.05))
    return FitResult(
        values=values,
        errors=errors,
        sign=sign,
        chi2=float(2 * best.cost),
        dof=n - int(free.sum()),
        converged=bool(best.success),
        out_of_range=out,
        message=str(best.message) + note,
        shape_fixed=shape is not None,
    )


def singles_dip_ratio(rec: ScanRecord, *, return_error: bool = False):
    """Depth of the singles dip relative to the coincidence dip (absolute rates).

    The coincidence curve is fitted first (no drift correction, since the
    singles themselves carry the interference); the singles average is then
    fitted with the same ``d1, d2`` and offset.
    """
    cf = fit_scan(rec, "dip", drift=False)
    depth_c = cf.values["r_cl"] * cf.values["visibility"]
    singles = 0.5 * (rec.singles1 + rec.singles2)
    srec = ScanRecord(rec.delays, singles, rec.singles1, rec.singles2, rec.dwell, rec.window)
    sr = CorrectedRates(
        rec.delays,
        singles / rec.dwell,
        np.sqrt(np.maximum(singles, 1) / 2) / rec.dwell,
        np.zeros(len(rec), bool),
    )
    sf = fit_scan(srec, "dip", shape=(cf.values["d1"], cf.values["d2"]), rates=sr)
    depth_s = sf.values["r_cl"] * sf.values["visibility"]
    ratio = depth_s / depth_c
    if not return_error:
        return ratio
    # depth errors are dominated by the visibility terms; r_cl errors add in quadrature
    es = math.hypot(sf.errors["r_cl"] * sf.values["visibility"], sf.values["r_cl"] * sf.errors["visibility"])
    ec = math.hypot(cf.errors["r_cl"] * cf.values["visibility"], cf.values["r_cl"] * cf.errors["visibility"])
    return ratio, math.hypot(es / depth_c, ratio * ec / depth_c)


@dataclass
class WitnessResult:
    visibilities: list
    errors: list
    w: float
    sigma: float
    entangled: bool
    k: float = 3.0

    def to_dict(self) -> dict:
        return {
            "visibilities": [float(v) for v in self.visibilities],
            "errors": [float(e) for e in self.errors],
            "w": float(self.w),
            "sigma": float(self.sigma),
            "entangled": bool(self.entangled),
            "k": float(self.k),
        }


def witness(visibilities: Sequence[float], errors: Optional[Sequence[float]] = None, k: float = 3.0) -> WitnessResult:
    """Sum of the three correlation magnitudes; > 1 certifies non-separability.

    ``entangled`` requires ``w - 1 > k * sigma`` (with ``sigma = 0`` simply
    ``w > 1``).
    """
    v = [float(x) for x in visibilities]
    if len(v) != 3:
        raise ValueError("need one visibility per mutually unbiased basis (3)")
    e = [0.0, 0.0, 0.0] if errors is None else [float(x) for x in errors]
    w = sum(abs(x) for x in v)
    sigma = math.sqrt(sum(x * x for x in e))
    return WitnessResult(v, e, w, sigma, bool(w - 1 > k * sigma), k)


def correlation_visibility(counts) -> tuple[float, float]:
    """Correlation ``(N00 + N11 - N01 - N10) / N`` from a 2x2 count table.

    ``counts[a][b]`` is the count with detector 1 in outcome ``a`` and
    detector 2 in outcome ``b``.  The error assumes Poisson counts.
    """
    n = np.asarray(counts, dtype=float).reshape(2, 2)
    corr, anti = n[0, 0] + n[1, 1], n[0, 1] + n[1, 0]
    tot = corr + anti
    if tot <= 0:
        return 0.0, 0.0
    e = (corr - anti) / tot
    return float(e), float(math.sqrt(max(1 - e * e, 0) / tot))


def witness_from_counts(counts: Mapping[str, Sequence] | Sequence, k: float = 3.0) -> WitnessResult:
    """Witness from 12 zero-delay coincidence counts, four per basis.

    ``counts`` maps each basis name to its four counts ``[N00, N01, N10,
    N11]`` (or a 2x2 table), or is a sequence of three such entries.
    """
    entries = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    if len(entries) != 3:
        raise ValueError("need counts for exactly three bases")
    vis, err = zip(*(correlation_visibility(c) for c in entries))
    return witness(vis, err, k)


def write_record(rec: ScanRecord, path) -> tuple[Path, Path]:
    """CSV ``delay_s,coinc,singles1,singles2`` plus a ``.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay_s", "coinc", "singles1", "singles2"])
        for row in zip(rec.delays, rec.coincidences, rec.singles1, rec.singles2):
            w.writerow([repr(float(x)) for x in row])
    side = path.with_suffix(".json")
    side.write_text(json.dumps({"dwell": rec.dwell, "window": rec.window}))
    return path, side


def read_record(path) -> ScanRecord:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    meta = json.loads(path.with_suffix(".json").read_text())
    col = lambda k: np.array([float(r[k]) for r in rows])
    return ScanRecord(col("delay_s"), col("coinc"), col("singles1"), col("singles2"), meta["dwell"], meta["window"])


def write_corrected_csv(rates: CorrectedRates, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay_s", "rate", "sigma", "negative"])
        for t, r, s, neg in zip(rates.delays, rates.rates, rates.sigma, rates.negative):
            w.writerow([repr(float(t)), repr(float(r)), repr(float(s)), int(neg)])
    return path
