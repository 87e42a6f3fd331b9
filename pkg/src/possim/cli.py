"""``possim`` command-line driver.

Each command reads a JSON run configuration, computes, and writes CSV
artifacts into ``--out``.  Exit status: 0 success, 2 invalid configuration,
3 a fixture does not reproduce its reference statistics, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import rng as _rng
from .artifacts import config_hash, write_artifact
from .credal import calibrate_ellipsoid, sample_inner_approx
from .diagnostics import (
    RootNecessity,
    bayes_regression_procedure,
    fcr_estimate,
    im_fcr_estimate,
    regression_covariates,
    regression_root_hypothesis,
)
from .engine import MonteCarloConfig, contour_mc, contour_wilks, likelihood_contour, validity_diagnostic
from .errors import ConfigError, FixtureMismatchError, PossimError
from .marginal import builtin_features, extension_contour, plugin_profile_contour, profile_contour
from .models import FIXTURES, Dataset, check_fixture, fixture, make_model, mle, read_dataset
from .predict import LossFunction, conformal_transducer, fit_risk_im

log = logging.getLogger("possim")

EXIT_OK, EXIT_CONFIG, EXIT_FIXTURE, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = ("contour", "region", "marginal", "sample", "predict", "riskim", "diagnose-validity", "diagnose-fcr")

_axis = {
    "type": "object",
    "properties": {"min": {"type": "number"}, "max": {"type": "number"}, "steps": {"type": "integer", "minimum": 2}},
    "required": ["min", "max", "steps"],
    "additionalProperties": False,
}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_alphas = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}, "minItems": 1}

BASE_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "model": {
            "type": "object",
            "properties": {"id": {"type": "string"}, "hyper": {"type": "object"}},
            "required": ["id"],
            "additionalProperties": False,
        },
        "data": {
            "type": "object",
            "properties": {"path": {"type": "string"}, "fixture": {"enum": sorted(FIXTURES)},
                           "check": {"enum": sorted(FIXTURES)}},
            "oneOf": [{"required": ["path"]}, {"required": ["fixture"]}],
            "additionalProperties": False,
        },
        "feature": {
            "type": "object",
            "properties": {"id": {"type": "string"}, "args": {"type": "object"},
                           "nuisance_lower": _vector, "nuisance_upper": _vector},
            "required": ["id"],
            "additionalProperties": False,
        },
        "grid": {"type": "array", "items": _axis, "minItems": 1},
        "mc": {
            "type": "object",
            "properties": {"M": {"type": "integer", "minimum": 100}, "seed": {"type": "integer", "minimum": 0},
                           "parallel": {"type": "boolean"}},
            "required": ["seed"],
            "additionalProperties": False,
        },
        "method": {"enum": ["mc", "pivotal", "wilks"]},
        "profile": {"enum": ["profile", "full-mle", "nuisance-mle"]},
        "alphas": _alphas,
        "output": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "sample": {
            "type": "object",
            "properties": {"M": {"type": "integer", "minimum": 1}, "inflation": {"type": "number", "minimum": 1},
                           "probes": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "loss": {
            "type": "object",
            "properties": {"kind": {"enum": ["squared-error", "zero-one", "check"]},
                           "u": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
            "required": ["kind"],
            "additionalProperties": False,
        },
        "B": {"type": "integer", "minimum": 500},
        "validity": {
            "type": "object",
            "properties": {"theta": _vector, "n": {"type": "integer", "minimum": 2},
                           "reps": {"type": "integer", "minimum": 500}},
            "required": ["theta", "n", "reps"],
            "additionalProperties": False,
        },
        "fcr": {
            "type": "object",
            "properties": {"theta": _vector, "n": {"type": "integer", "minimum": 4},
                           "reps": {"type": "integer", "minimum": 200}, "draws": {"type": "integer", "minimum": 100},
                           "root": {"type": "number"}, "null_M": {"type": "integer", "minimum": 100}},
            "required": ["theta", "n", "reps"],
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

REQUIRED = {
    "contour": ["model", "data", "grid", "mc"],
    "region": ["model", "data", "grid", "mc", "alphas"],
    "marginal": ["model", "data", "feature", "grid", "mc"],
    "sample": ["model", "data", "mc", "sample"],
    "predict": ["data", "grid", "alphas"],
    "riskim": ["data", "loss", "grid", "mc"],
    "diagnose-validity": ["model", "validity", "mc", "alphas"],
    "diagnose-fcr": ["fcr", "mc", "alphas"],
}


def validate_config(config: dict, command: str) -> None:
    """Raise :class:`jsonschema.ValidationError` if ``config`` is malformed for ``command``."""
    schema = copy.deepcopy(BASE_SCHEMA)
    schema["required"] = REQUIRED[command]
    jsonschema.validate(config, schema)
    if config.get("command", command) != command:
        raise jsonschema.ValidationError(f"config is for '{config['command']}', not '{command}'")


def effective_config(config: dict, command: str, env=None) -> dict:
    """Config after environment overrides (``POSSIM_SEED``)."""
    env = os.environ if env is None else env
    cfg = copy.deepcopy(config)
    cfg["command"] = command
    if "POSSIM_SEED" in env and "mc" in cfg:
        try:
            cfg["mc"]["seed"] = int(env["POSSIM_SEED"])
        except ValueError:
            raise ConfigError(f"POSSIM_SEED must be an integer, got '{env['POSSIM_SEED']}'") from None
    return cfg


# -- helpers --------------------------------------------------------------------

def grid_points(spec) -> np.ndarray:
    axes = [np.linspace(a["min"], a["max"], a["steps"]) for a in spec]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _mc(cfg) -> MonteCarloConfig:
    mc = cfg["mc"]
    return MonteCarloConfig(M=mc.get("M", 1000), seed=mc["seed"], parallel=mc.get("parallel", True))


def _dataset(cfg, base: Path) -> Dataset:
    d = cfg["data"]
    if "fixture" in d:
        z = fixture(d["fixture"])
        check_fixture(d["fixture"], z)
        return z
    p = Path(d["path"])
    z = read_dataset(p if p.is_absolute() else base / p)
    if "check" in d:
        check_fixture(d["check"], z)
    return z


def _model(cfg, z: Dataset | None = None):
    hyper = dict(cfg["model"].get("hyper", {}))
    if cfg["model"]["id"] == "multinomial" and "K" not in hyper and z is not None:
        hyper["K"] = z.n
    try:
        return make_model(cfg["model"]["id"], **hyper)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None


def _param_names(model) -> list[str]:
    names = list(getattr(model, "param_names", ()) or ())
    return names if len(names) == model.dim else [f"theta{j + 1}" for j in range(model.dim)]


def _contour(cfg, model, z):
    method = cfg.get("method", "pivotal" if model.pivotal else "mc")
    return likelihood_contour(model, z, method, _mc(cfg))


def _meta(cfg) -> dict:
    seed = cfg.get("mc", {}).get("seed")
    return {"possim": cfg["command"], "config_sha256": config_hash(cfg),
            "seed": "none" if seed is None else seed}


# -- commands -------------------------------------------------------------------

def cmd_contour(cfg, base):
    z = _dataset(cfg, base)
    model = _model(cfg, z)
    C = _contour(cfg, model, z)
    pts = grid_points(cfg["grid"])
    vals = C.many(pts)
    return {"contour": (_param_names(model) + ["plausibility"], [list(p) + [v] for p, v in zip(pts, vals)])}


def cmd_region(cfg, base):
    z = _dataset(cfg, base)
    model = _model(cfg, z)
    C = _contour(cfg, model, z)
    pts = grid_points(cfg["grid"])
    vals = C.many(pts)
    rows = [[a] + list(p) + [v] for a in cfg["alphas"] for p, v in zip(pts, vals) if v >= a]
    return {"region": (["alpha"] + _param_names(model) + ["plausibility"], rows)}


def cmd_marginal(cfg, base):
    z = _dataset(cfg, base)
    model = _model(cfg, z)
    fcfg = cfg["feature"]
    try:
        f = builtin_features()[fcfg["id"]](**fcfg.get("args", {}))
    except KeyError:
        raise ConfigError(f"unknown feature '{fcfg['id']}'") from None
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    mc = _mc(cfg)
    joint = _contour(cfg, model, z)
    that, _ = mle(model, z)
    if "nuisance_lower" in fcfg and "nuisance_upper" in fcfg:
        lower, upper = np.asarray(fcfg["nuisance_lower"]), np.asarray(fcfg["nuisance_upper"])
    elif f.nuisance_bounds is not None:
        lower, upper = f.nuisance_bounds
    else:
        centre = np.atleast_1d(f.nuisance_of(that))
        lower, upper = centre - 5.0, centre + 5.0
    variant = cfg.get("profile", "profile")
    pts = grid_points(cfg["grid"])
    names = [f"phi{j + 1}" for j in range(pts.shape[1])] if pts.shape[1] > 1 else ["phi"]
    ext, prof = [], []
    for phi in pts:
        ext.append(list(phi) + [extension_contour(joint, f, phi, lower, upper)])
        if variant == "profile":
            v = profile_contour(model, z, f, phi, mc)
        else:
            v = plugin_profile_contour(model, z, f, phi, mc, variant)
        prof.append(list(phi) + [v])
    return {"marginal_extension": (names + ["plausibility"], ext),
            "marginal_profile": (names + ["plausibility"], prof)}


def cmd_sample(cfg, base):
    z = _dataset(cfg, base)
    model = _model(cfg, z)
    s = cfg["sample"]
    C = _contour(cfg, model, z)
    seed = cfg["mc"]["seed"]
    E = calibrate_ellipsoid(C, model, z, probes_per_alpha=s.get("probes", 16),
                            inflation=s.get("inflation", 1.1), seed=seed)
    S = sample_inner_approx(E, s.get("M", 5000), seed, parallel=cfg["mc"].get("parallel", True))
    rows = [[a] + list(p) for a, p in zip(S.levels, S.points)]
    out = {"sample": (["level"] + _param_names(model), rows)}
    if S.notes:
        out["_meta"] = {"note": "; ".join(S.notes)}
    return out


def cmd_predict(cfg, base):
    z = _dataset(cfg, base)
    cand = grid_points(cfg["grid"])
    if cand.shape[1] != 1:
        raise ConfigError("predict expects a one-dimensional candidate grid")
    vals = [conformal_transducer(z.y, c[0]) for c in cand]
    grid_rows = [[c[0], v] for c, v in zip(cand, vals)]
    set_rows = [[a, c[0]] for a in cfg["alphas"] for c, v in zip(cand, vals) if v >= a]
    return {"predict": (["candidate", "plausibility"], grid_rows),
            "predict_sets": (["alpha", "candidate"], set_rows)}


def cmd_riskim(cfg, base):
    z = _dataset(cfg, base)
    try:
        loss = LossFunction(cfg["loss"]["kind"], cfg["loss"].get("u"))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    im = fit_risk_im(z, loss, cfg.get("B", 1000), cfg["mc"]["seed"], parallel=cfg["mc"].get("parallel", True))
    pts = grid_points(cfg["grid"])
    if pts.shape[1] != loss.dim(z.x):
        raise ConfigError(f"riskim grid must have {loss.dim(z.x)} dimensions")
    names = ["theta"] if pts.shape[1] == 1 else ["theta1", "theta2"]
    return {"riskim": (names + ["plausibility"], [list(p) + [im(p)] for p in pts])}


def cmd_validity(cfg, base):
    model = _model(cfg)
    v = cfg["validity"]
    method = cfg.get("method", "mc")
    if method == "pivotal":
        raise ConfigError("diagnose-validity supports methods 'mc' and 'wilks'")
    fn = contour_mc if method == "mc" else (lambda m, z, th, c: contour_wilks(m, z, th))
    x = None
    if model.name in ("linear_regression", "logistic_binomial"):
        x = regression_covariates(v["n"], cfg["mc"]["seed"])
    table = validity_diagnostic(model, [v["theta"]], cfg["alphas"], v["reps"], _mc(cfg), v["n"], x, fn)
    rows = [[a, f, b, p] for _, a, f, b, p in table.rows()]
    return {"validity": (["alpha", "frequency", "bound", "pass"], rows)}


def cmd_fcr(cfg, base):
    f = cfg["fcr"]
    seed = cfg["mc"]["seed"]
    root = f.get("root", -1.0)
    H = regression_root_hypothesis(root)
    x = regression_covariates(f["n"], seed)
    parallel = cfg["mc"].get("parallel", True)
    bayes = fcr_estimate(bayes_regression_procedure(), H, f["theta"], f["n"], f["reps"], cfg["alphas"], seed,
                         f.get("draws", 5000), x, parallel=parallel)
    necessity = RootNecessity.for_design(x, MonteCarloConfig(M=f.get("null_M", 20000), seed=seed, parallel=parallel),
                                         root)
    im = im_fcr_estimate(necessity, H, f["theta"], f["n"], f["reps"], cfg["alphas"], seed, x, parallel=parallel)
    rows = [[a, b, i, s] for a, b, i, s in zip(bayes.alphas, bayes.rates, im.rates, bayes.se)]
    return {"fcr": (["alpha", "bayes_fcr", "im_fcr", "se"], rows)}


HANDLERS = {
    "contour": cmd_contour,
    "region": cmd_region,
    "marginal": cmd_marginal,
    "sample": cmd_sample,
    "predict": cmd_predict,
    "riskim": cmd_riskim,
    "diagnose-validity": cmd_validity,
    "diagnose-fcr": cmd_fcr,
}


def run(command: str, config: dict, out_dir, base_dir=".", env=None) -> list[Path]:
    """Validate, compute and write the artifacts of one command; returns the written paths."""
    validate_config(config, command)
    cfg = effective_config(config, command, env)
    tables = HANDLERS[command](cfg, Path(base_dir))
    meta = _meta(cfg)
    meta.update(tables.pop("_meta", {}))
    stem = cfg.get("output")
    paths = []
    for name, (columns, rows) in tables.items():
        fname = f"{stem}_{name}.csv" if stem else f"{name}.csv"
        paths.append(write_artifact(Path(out_dir) / fname, columns, rows, meta))
    return paths


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="possim", description="Possibilistic inferential models.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=".", help="directory for CSV artifacts")
    p.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        _rng.set_threads(args.threads)
    try:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"possim: cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = run(args.command, config, args.out, base_dir=Path(args.config).resolve().parent)
    except (jsonschema.ValidationError, ConfigError) as e:
        print(f"possim: invalid config: {getattr(e, 'message', e)}", file=sys.stderr)
        return EXIT_CONFIG
    except FixtureMismatchError as e:
        print(f"possim: fixture mismatch: {e}", file=sys.stderr)
        return EXIT_FIXTURE
    except OSError as e:
        print(f"possim: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PossimError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"possim: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"possim: invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
