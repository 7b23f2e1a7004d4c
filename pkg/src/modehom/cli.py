"""Batch front end: ``modehom <subcommand> --config run.json``.

Subcommands are ``design``, ``predict``, ``scan``, ``fit``, ``witness`` and
``transfer``.  Every artifact lands under ``--out`` (or the config's ``out``).
Exit codes: 0 success, 2 configuration error, 3 numerical failure; failures
print a JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import biphoton as bp
from . import scanlab as sl
from .freespace import load_design, save_design, transfer_matrix
from .modefield import LG, GridSpec, build_basis, spec_from_dict
from .wfm import WfmConfig, wavefront_match

log = logging.getLogger("modehom")

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "modehom experiment config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ells": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                "p": {"type": "integer", "minimum": 0},
                "waist": {"type": "number", "exclusiveMinimum": 0},
                "specs": {"type": "array", "items": {"type": "object"}},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nx": {"type": "integer"},
                "ny": {"type": "integer"},
                "dx": {"type": "number"},
                "dy": {"type": "number"},
            },
        },
        "wavelength": {"type": "number", "exclusiveMinimum": 0},
        "unitary": {"type": ["string", "array", "object"]},
        "inputs": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        "projectors": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
        "gamma": {
            "oneOf": [
                {"type": "number", "minimum": 0, "maximum": 1},
                {"type": "object", "additionalProperties": False, "properties": {"d1": {"type": "number"}, "d2": {"type": "number"}}},
            ]
        },
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pair_rate": {"type": "number", "exclusiveMinimum": 0},
                "singles": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "dwell": {"type": "number", "exclusiveMinimum": 0},
                "window": {"type": "number", "minimum": 0},
                "span": {"type": "number", "exclusiveMinimum": 0},
                "step": {"type": "number", "exclusiveMinimum": 0},
                "slope": {"type": "number"},
                "offset": {"type": "number"},
                "drift": {"type": "number"},
                "noise": {"type": "boolean"},
                "fit": {"enum": ["calibrated", "free"]},
            },
        },
        "wfm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "plane_count": {"type": "integer", "minimum": 1},
                "spacing": {"type": "number", "exclusiveMinimum": 0},
                "sweep_count": {"type": "integer", "minimum": 1},
                "wavelengths": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "phase_reference": {"enum": ["mode", "global"]},
            },
        },
        "witness": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bases": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
                "visibilities": {"type": "array", "items": {"type": ["number", "null"]}},
                "errors": {"type": "array", "items": {"type": ["number", "null"]}},
                "counts": {"type": ["object", "array"]},
                "fits": {"type": "array", "items": {"type": "string"}},
                "k": {"type": "number"},
            },
        },
        "design_dir": {"type": "string"},
        "scan_dir": {"type": "string"},
        "wavelengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
    },
}

BASIS_BY_DIM = {2: (-1, 1), 3: (-1, 0, 1), 4: (-2, -1, 1, 2)}
WITNESS_BASES_2D = (("l-1", "l+1"), ("D", "A"), ("H", "V"))


class ConfigError(Exception):
    pass


class NumericalError(Exception):
    pass


def _dump(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    # json writes floats with repr, which round-trips all 17 digits
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config does not match schema: {exc.message}") from exc
    return cfg


def resolve_unitary(value, base_dir: Path = Path(".")) -> np.ndarray:
    """Named built-in, inline matrix, or path to a JSON matrix file."""
    try:
        if isinstance(value, str):
            try:
                return bp.named_unitary(value).entries
            except KeyError:
                p = Path(value)
                if not p.is_absolute():
                    p = base_dir / p
                if not p.exists():
                    raise ConfigError(f"unknown unitary {value!r}")
                return bp.unitary_from_json(p.read_text()).entries
        return bp.UnitaryMatrix(bp._parse_matrix(value)).entries
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad unitary: {exc}") from exc


def _default_states(d: int) -> list[str]:
    if d == 2:
        return ["l-1", "l+1"]
    return [f"{d}d:l{ell:+d}" if ell else f"{d}d:l0" for ell in BASIS_BY_DIM[d]]


def _state(name: str, d: int) -> np.ndarray:
    cat = bp.named_states()
    if name not in cat:
        raise ConfigError(f"unknown state {name!r}")
    s = np.asarray(cat[name])
    if s.size != d:
        raise ConfigError(f"state {name!r} has dimension {s.size}, unitary has {d}")
    return s


def _gamma_shape(cfg) -> tuple[float, float]:
    g = cfg.get("gamma", {})
    if isinstance(g, dict):
        return float(g.get("d1", sl.D1_DEFAULT)), float(g.get("d2", sl.D2_DEFAULT))
    return sl.D1_DEFAULT, sl.D2_DEFAULT


def predict_table(cfg, base_dir=Path(".")) -> list[dict]:
    U = resolve_unitary(cfg.get("unitary", "u2"), base_dir)
    d = U.shape[0]
    names = _default_states(d)
    inputs = cfg.get("inputs") or [names[0], names[-1]]
    u, v = (_state(n, d) for n in inputs)
    projectors = cfg.get("projectors") or [[a, b] for a in names for b in names]
    gamma = cfg.get("gamma")
    rows = []
    for a, b in projectors:
        p, q = _state(a, d), _state(b, d)
        try:
            setup = bp.CoincidenceSetup(u, v, U, p, q)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        r_cl, r_qu = bp.classical_and_quantum(setup)
        kind = "bump" if r_qu > r_cl else "dip"
        row = {
            "projection": [a, b],
            "r_cl": r_cl,
            "r_qu": r_qu,
            "visibility": bp.visibility(r_cl, r_qu, kind) if r_cl > 0 else None,
            "kind": kind,
        }
        if isinstance(gamma, (int, float)):
            row["rate_at_gamma"] = bp.coincidence_rate(setup.with_gamma(float(gamma)))
        rows.append(row)
    return rows


def cmd_predict(cfg, out: Path, args) -> dict:
    rows = predict_table(cfg, args.base_dir)
    _dump({"rows": rows}, out / "predict.json")
    with open(out / "predict.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "q", "r_cl", "r_qu", "visibility", "kind"])
        for r in rows:
            w.writerow([*r["projection"], repr(r["r_cl"]), repr(r["r_qu"]), repr(r["visibility"]), r["kind"]])
    return {"rows": rows}


def _fit_record(rec, sign, shape, offset, mode="calibrated") -> sl.FitResult:
    """Fit one scan.

    ``calibrated`` holds the envelope shape and delay offset at the configured
    instrument values and fits the rest. ``free`` fits the shape too and only
    falls back to the calibrated fit when the free problem is degenerate.
    """
    if mode == "free":
        try:
            return sl.fit_scan(rec, sign)
        except sl.DegenerateScanError:
            pass
    return sl.fit_scan(rec, sign, shape=shape, offset=offset)


def cmd_scan(cfg, out: Path, args) -> dict:
    rows = predict_table(cfg, args.base_dir)
    sc = cfg.get("scan", {})
    d1, d2 = _gamma_shape(cfg)
    noise = sc.get("noise", True) and not args.no_noise
    seed = cfg.get("seed", 0) if args.seed is None else args.seed
    results = []
    for i, row in enumerate(rows):
        if row["r_cl"] <= 0:
            continue
        model = sl.model_from_rates(
            row["r_cl"],
            row["r_qu"],
            sc.get("pair_rate", 40.0),
            d1=d1,
            d2=d2,
            slope=sc.get("slope", 0.0),
            offset=sc.get("offset", 0.0),
            span=sc.get("span", 2e-12),
            step=sc.get("step", 0.1e-12),
        )
        rec = sl.synthesize(
            model,
            tuple(sc.get("singles", (2e4, 2e4))),
            sc.get("dwell", 10.0),
            seed + i,
            window=sc.get("window", 1e-9),
            noise=noise,
            drift=sc.get("drift", 0.0),
        )
        tag = f"scan_{i:02d}_{row['projection'][0]}_{row['projection'][1]}".replace(":", "")
        sl.write_record(rec, out / f"{tag}.csv")
        sl.write_corrected_csv(sl.corrected_rates(rec), out / f"{tag}_corrected.csv")
        fit = _fit_record(rec, model.sign, (d1, d2), model.offset, sc.get("fit", "calibrated"))
        _dump({"projection": row["projection"], "predicted": row, "fit": fit.to_dict()}, out / f"{tag}_fit.json")
        results.append({"scan": tag, "predicted": row["visibility"], "fitted": fit.visibility, "error": fit.visibility_error})
    _dump({"scans": results}, out / "scan_summary.json")
    return {"scans": results}


def cmd_fit(cfg, out: Path, args) -> dict:
    src = Path(args.scans or cfg.get("scan_dir") or out)
    d1, d2 = _gamma_shape(cfg)
    files = sorted(p for p in src.glob("scan_*.csv") if not p.stem.endswith("_corrected"))
    if not files:
        raise ConfigError(f"no scan CSVs in {src}")
    results = []
    for f in files:
        rec = sl.read_record(f)
        sc = cfg.get("scan", {})
        fit = _fit_record(rec, None, (d1, d2), sc.get("offset", 0.0), sc.get("fit", "calibrated"))
        _dump(fit.to_dict(), out / f"{f.stem}_refit.json")
        results.append({"scan": f.stem, "fitted": fit.visibility, "error": fit.visibility_error, "sign": fit.sign})
    _dump({"fits": results}, out / "fit_summary.json")
    return {"fits": results}


def _predicted_correlations(cfg, bases, base_dir) -> list[tuple[float, float]]:
    U = resolve_unitary(cfg.get("unitary", "u2"), base_dir)
    d = U.shape[0]
    inputs = cfg.get("inputs") or ["l-1", "l+1"]
    u, v = (_state(n, d) for n in inputs)
    out = []
    for a, b in bases:
        table = bp.detection_table(U, u, v, _state(a, d), _state(b, d))
        e = (table[0, 0] + table[1, 1] - table[0, 1] - table[1, 0]) / table.sum()
        out.append((float(e), 0.0))
    return out


def witness_from_config(cfg, base_dir=Path(".")) -> sl.WitnessResult:
    wc = cfg.get("witness", {})
    k = wc.get("k", 3.0)
    if "counts" in wc:
        return sl.witness_from_counts(wc["counts"], k)
    bases = [tuple(b) for b in wc.get("bases", WITNESS_BASES_2D)]
    if "fits" in wc:
        vis, err = [], []
        for f in wc["fits"]:
            p = Path(f) if Path(f).is_absolute() else base_dir / f
            fit = json.loads(p.read_text())
            fit = fit.get("fit", fit)
            vis.append(fit["values"]["visibility"])
            err.append(fit["errors"]["visibility"])
    else:
        vis = list(wc.get("visibilities", [None, None, None]))
        err = list(wc.get("errors", [0.0] * len(vis)))
    if len(vis) != 3:
        raise ConfigError("witness needs three bases")
    err = [0.0 if e is None else e for e in err]
    # bases without a dip fit (photons leave in eigenstates) use the predicted
    # correlation from their four projection rates
    missing = [i for i, x in enumerate(vis) if x is None]
    if missing:
        pred = _predicted_correlations(cfg, [bases[i] for i in missing], base_dir)
        for i, (e, s) in zip(missing, pred):
            vis[i], err[i] = e, s
    return sl.witness(vis, err, k)


def cmd_witness(cfg, out: Path, args) -> dict:
    res = witness_from_config(cfg, args.base_dir).to_dict()
    _dump(res, out / "witness.json")
    return res


def _basis_from_config(cfg, wavelength):
    b = cfg.get("basis", {})
    grid = GridSpec(**{"nx": 256, "ny": 256, "dx": 25e-6, "dy": 25e-6, **cfg.get("grid", {})})
    if "specs" in b:
        specs = [spec_from_dict(s) for s in b["specs"]]
    else:
        specs = [LG(int(l), int(b.get("p", 0)), float(b.get("waist", 0.6e-3))) for l in b["ells"]]
    return build_basis(specs, grid, wavelength)


def cmd_design(cfg, out: Path, args) -> dict:
    name = args.unitary or cfg.get("unitary", "u2")
    U = resolve_unitary(name, args.base_dir)
    d = U.shape[0]
    wl = float(cfg.get("wavelength", 810e-9))
    cfg = dict(cfg)
    cfg.setdefault("basis", {})
    if "ells" not in cfg["basis"] and "specs" not in cfg["basis"]:
        if d not in BASIS_BY_DIM:
            raise ConfigError(f"no default basis for dimension {d}; give basis.ells")
        cfg["basis"] = {**cfg["basis"], "ells": list(BASIS_BY_DIM[d])}
    try:
        basis = _basis_from_config(cfg, wl)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad basis: {exc}") from exc
    if basis.dim != d:
        raise ConfigError(f"basis has {basis.dim} modes, unitary is {d}x{d}")
    w = cfg.get("wfm", {})
    wcfg = WfmConfig(
        plane_count=w.get("plane_count", 3),
        spacing=w.get("spacing", 0.8),
        sweep_count=w.get("sweep_count", 100),
        wavelengths=tuple(w.get("wavelengths", (wl,))),
        phase_reference=w.get("phase_reference", "global"),
    )
    design, report = wavefront_match(basis, U, wcfg)
    save_design(design, out / "design")
    rep = report.to_dict()
    rep["unitary"] = name if isinstance(name, str) else "matrix"
    _dump(rep, out / "wfm_report.json")
    m = report.metrics[wcfg.wavelengths[0]]
    return {
        "design_dir": str(out / "design"),
        "mean_efficiency": m.mean_efficiency,
        "mode_independent_loss": m.mode_independent_loss,
        "in_space_error": m.in_space_error,
    }


def cmd_transfer(cfg, out: Path, args) -> dict:
    src = args.design or cfg.get("design_dir")
    if not src:
        raise ConfigError("transfer needs --design or design_dir")
    try:
        design = load_design(src)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load design {src}: {exc}") from exc
    wls = args.wavelengths or cfg.get("wavelengths") or list(design.wavelengths)
    metrics = [transfer_matrix(design, float(wl)).to_dict() for wl in wls]
    res = {"metrics": metrics}
    _dump(res, out / "transfer.json")
    return res


COMMANDS = {
    "design": cmd_design,
    "predict": cmd_predict,
    "scan": cmd_scan,
    "fit": cmd_fit,
    "witness": cmd_witness,
    "transfer": cmd_transfer,
}


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subparser from resetting flags given before the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quiet", action="store_true", help="no summary on stdout")

    ap = argparse.ArgumentParser(prog="modehom", description=__doc__.splitlines()[0], parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("design", parents=[common], help="wavefront-match an MPLC design")
    p.add_argument("--unitary", help="u2, u3, rot3, u4:<phi>, or a JSON matrix file")
    sub.add_parser("predict", parents=[common], help="ideal classical/quantum rates per projection")
    p = sub.add_parser("scan", parents=[common], help="synthesize and fit delay scans")
    p.add_argument("--no-noise", action="store_true", help="write mean counts instead of Poisson draws")
    p = sub.add_parser("fit", parents=[common], help="refit scan CSVs")
    p.add_argument("--scans", help="directory with scan CSVs")
    sub.add_parser("witness", parents=[common], help="entanglement witness")
    p = sub.add_parser("transfer", parents=[common], help="transfer matrix of a saved design")
    p.add_argument("--design", help="design directory")
    p.add_argument("--wavelengths", type=float, nargs="+", help="wavelengths in meters")
    return ap


def _fail(code: int, exc: Exception) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    defaults = {"config": None, "seed": None, "out": None, "quiet": False, "unitary": None}
    defaults.update({"no_noise": False, "scans": None, "design": None, "wavelengths": None})
    for name, default in defaults.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config)
        args.base_dir = Path(args.config).parent if args.config else Path(".")
        out = Path(args.out or cfg.get("out") or ".")
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        return _fail(2, exc)
    except (sl.DegenerateScanError, np.linalg.LinAlgError, FloatingPointError, RuntimeError, NumericalError) as exc:
        return _fail(3, exc)
    if not args.quiet:
        print(json.dumps(result, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
