"""Named experiments, config validation and output writing.

A config is a JSON object

    {"experiment": name, "system": descriptor, "parameters": {...},
     "seed": int, "output_dir": path, "deterministic": bool}

Unknown keys at either level are rejected. Every run writes manifest.json
(the fully resolved config, itself a valid config), summary.json, zero or
more CSV tables and timing.json. Only timing.json depends on the clock, so
rerunning a manifest reproduces the other files byte for byte.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError

OUTPUT_ENV = "DINISRB_OUTPUT_DIR"
CONFIG_KEYS = {"experiment", "system", "parameters", "seed", "output_dir", "deterministic", "version"}


@dataclass
class ExperimentConfig:
    experiment: str
    system: dict | None
    parameters: dict
    seed: int = 0
    output_dir: str | None = None
    deterministic: bool = True

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "system": self.system, "parameters": self.parameters,
                "seed": self.seed, "output_dir": self.output_dir, "deterministic": self.deterministic,
                "version": __version__}


@dataclass
class ExperimentReport:
    manifest: dict
    tables: dict
    summary: dict
    wall_time: float
    output_dir: str | None = None


@dataclass
class Experiment:
    name: str
    description: str
    statement: str
    defaults: dict
    required: tuple = ()
    default_system: dict | None = None
    func: object = None
    tables: dict = field(default_factory=dict)


REGISTRY: dict[str, Experiment] = {}


def experiment(name, description, statement, defaults, required=(), system=None):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, description, statement, dict(defaults), tuple(required), system, fn)
        return fn
    return wrap


def list_experiments() -> list:
    return [{"name": e.name, "description": e.description, "statement": e.statement,
             "required": list(e.required), "parameters": sorted(e.defaults),
             "default_system": e.default_system} for e in REGISTRY.values()]


# ---------------------------------------------------------------------------
# helpers

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _system(desc):
    from .systems import make_system
    return make_system(desc)


def _as_points(v, name):
    a = np.asarray(v, dtype=float)
    if a.shape != (2,):
        raise ValidationError(f"{name} must be a pair [x1, x2]")
    return a


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# ---------------------------------------------------------------------------
# experiments

@experiment("modulus-audit", "Dini test, omega-tilde values and series equivalence constants for a modulus",
            "A modulus is Dini exactly when the integral of omega(t)/t near 0 is finite, and the "
            "integral is comparable to the dyadic-type series sum omega(c^k t) for every c in (0,1).",
            {"modulus": {"kind": "power", "params": {"alpha": 0.5}}, "cs": [0.3, 0.5, 0.9],
             "grid": [1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0]})
def _modulus_audit(cfg, P):
    from .modulus import Modulus, dini_test, equivalence_check, tilde_integral
    m = Modulus.from_dict(P["modulus"])
    rep = dini_test(m, cs=P["cs"])
    out = {"modulus": m.to_dict(), "summable": rep.summable, "integral_estimate": rep.integral_estimate,
           "series_estimates": {str(c): v for c, v in rep.series_estimates.items()}}
    rows = []
    if rep.summable:
        grid = [t for t in P["grid"] if t <= m.t_max]
        out["equivalence_constants"] = {str(c): equivalence_check(m, c, grid) for c in P["cs"]}
        for t in grid:
            rows.append([t, float(m(t)), tilde_integral(m, t)])
    else:
        rows = [[t, float(m(t)), math.inf] for t in P["grid"] if t <= m.t_max]
    return out, {"modulus": (["t", "omega", "omega_tilde"], rows)}


@experiment("splitting", "Unstable/stable directions at a point by iterating seed lines",
            "Along orbits of a hyperbolic set the graph transform contracts, so pushed-forward "
            "lines converge exponentially to the unstable direction.",
            {"point": [0.3, 0.7], "n_iter": 60, "tol": 1e-10, "seed_u": [1.0, 0.0], "seed_s": [0.0, 1.0]},
            system={"name": "cat-map"})
def _splitting(cfg, P):
    from .grassmann import compute_splitting, fit_rate
    s = _system(cfg.system)
    r = compute_splitting(s, _as_points(P["point"], "point"), int(P["n_iter"]), float(P["tol"]),
                          P["seed_u"], P["seed_s"])
    out = {"converged": r.converged, "iterations": r.iterations, "residual": r.residual,
           "rate": fit_rate(r.residual_history), "unstable": r.unstable.vector, "stable": r.stable.vector}
    rows = [[k + 1, a, b] for k, (a, b) in enumerate(zip(r.residual_history, r.stable_residual_history))]
    return out, {"residuals": (["k", "residual_u", "residual_s"], rows)}


@experiment("lemma-verify", "Randomised check of one of the five graph-transform lemmas",
            "1: the differential contracts graph distance near E^u by |A|E^s| |A^-1|E^u|; "
            "2: graph distance and principal angle agree to first order; 3: graph distances in "
            "nearby frames agree within a factor delta(eps) -> 1; 4: the sum of c^(n-k) omega(d_k) "
            "along a contracting orbit is bounded by a multiple of omega(lam^n d_0); 5: the geometric "
            "potential inherits the modulus omega up to the bracket constant.",
            {"lemma": 1, "options": {}}, required=("lemma",), system={"name": "cat-map"})
def _lemma(cfg, P):
    from . import lemmas
    k = int(P["lemma"])
    opts = dict(P["options"])
    s = _system(cfg.system)
    try:
        if k == 1:
            rep = lemmas.lemma1_check(seed=cfg.seed, **opts)
        elif k == 2:
            rep = lemmas.lemma2_check(seed=cfg.seed, **opts)
        elif k == 3:
            rep = lemmas.lemma3_check(seed=cfg.seed, **opts)
        elif k == 4:
            rep = lemmas.lemma4_check(s, seed=cfg.seed, **opts)
        elif k == 5:
            rep = lemmas.lemma5_check(s, seed=cfg.seed, **opts)
        else:
            raise ValidationError("lemma must be 1..5")
    except TypeError as e:
        raise ValidationError(f"bad lemma options: {e}") from None
    return rep.to_json(), {}


def _shift_model(desc, P):
    from .shift import (bernoulli_potential, constant_potential, dini_example_potential, full_shift,
                        golden_mean_shift, load_shift_json)
    name = desc.get("name") if isinstance(desc, dict) else None
    params = dict(desc.get("params", {})) if isinstance(desc, dict) else {}
    if name == "shift-json":
        return load_shift_json(params["path"])
    if name == "full-shift" or name == "full-2-shift":
        sft = full_shift(int(params.get("k", 2)))
    elif name == "golden-mean-shift":
        sft = golden_mean_shift()
    else:
        raise ValidationError(f"unknown shift {name!r}; use full-shift, golden-mean-shift or shift-json")
    pot = P["potential"]
    kind = pot.get("kind", "zero")
    if kind == "zero":
        return sft, constant_potential(sft, 0.0)
    if kind == "constant":
        return sft, constant_potential(sft, float(pot["c"]))
    if kind == "bernoulli":
        if sft.k != 2 or not sft.A.all():
            raise ValidationError("bernoulli potential needs the full 2-shift")
        return sft, bernoulli_potential(float(pot["p"]))
    if kind == "dini-example":
        if sft.k != 2 or not sft.A.all():
            raise ValidationError("dini-example potential needs the full 2-shift")
        kw = {k: pot[k] for k in ("depth", "beta", "decay", "amplitude") if k in pot}
        return sft, dini_example_potential(**kw)
    raise ValidationError(f"unknown potential kind {kind!r}")


@experiment("rpf", "Leading eigendata of the transfer operator on a subshift of finite type",
            "For a Dini potential on a mixing subshift the transfer operator has a simple leading "
            "eigenvalue e^P; eigenfunction times eigenmeasure is the Gibbs measure, which satisfies "
            "uniform cylinder-mass bounds and the variational principle.",
            {"potential": {"kind": "zero"}, "tol": 1e-12, "word_length": 3},
            system={"name": "full-shift", "params": {"k": 2}})
def _rpf(cfg, P):
    from .shift import cylinder_masses, entropy_check, gibbs_bounds, rpf_solve, stationarity_residual
    sft, pot = _shift_model(cfg.system, P)
    data = rpf_solve(sft, pot, tol=float(P["tol"]))
    ent = entropy_check(sft, pot, data)
    gb = gibbs_bounds(sft, pot, data)
    W, mass = cylinder_masses(sft, pot, data, int(P["word_length"]))
    out = {"eigenvalue": data.eigenvalue, "pressure": math.log(data.eigenvalue),
           "iterations": data.iterations, "entropy": ent, "stationarity_residual": stationarity_residual(sft, pot, data),
           "gibbs_b": gb["b"], "gibbs_B": gb["B"], "gibbs_spread_b": gb["spread_b"], "gibbs_spread_B": gb["spread_B"]}
    rows = [["".join(map(str, w)), float(m)] for w, m in zip(W, mass)]
    return out, {"gibbs": (["word", "mass"], rows)}


def _torus_potential(s, P):
    from .grassmann import GeometricPotential
    from .pressure import ConstantPotential
    kind = P["potential"]
    if kind == "zero":
        return ConstantPotential(0.0)
    if kind == "constant":
        return ConstantPotential(float(P["c"]))
    if kind == "geometric":
        return GeometricPotential(s, shift=float(P["c"]))
    raise ValidationError("potential must be zero, constant or geometric")


@experiment("pressure", "Topological pressure from (n, eps)-separated sets on a grid",
            "Pressure is the growth rate of sums of exp(S_n phi) over maximal (n, eps)-separated "
            "sets; for phi = 0 it is the topological entropy.",
            {"potential": "zero", "c": 0.0, "eps_list": [0.02], "n_list": list(range(1, 13)), "grid": 400,
             "jitter": None, "method": "increment"},
            system={"name": "cat-map"})
def _pressure(cfg, P):
    from .pressure import grid_candidates, pressure_estimate
    s = _system(cfg.system)
    X = grid_candidates(int(P["grid"]), P["jitter"])
    est = pressure_estimate(s, _torus_potential(s, P), P["eps_list"], P["n_list"], X, cfg.seed, P["method"])
    rows = [[r["n"], r["epsilon"], r["rate"], math.nan, r["size"], r["saturated"]] for r in est.rows]
    return est.to_json(), {"pressure": (["n", "epsilon", "estimate", "stderr", "size", "saturated"], rows)}


@experiment("attractor-criterion", "Pressure of the geometric potential and the attractor verdict",
            "For a C^1 hyperbolic set whose derivative has a Dini modulus, the set is an attractor "
            "if and only if the pressure of phi^u = -log J^u vanishes.",
            {"eps_list": [0.02], "n_list": list(range(1, 13)), "grid": 400, "threshold": 0.1, "shift": 0.0,
             "method": "increment", "jitter": None},
            system={"name": "cat-map"})
def _attractor(cfg, P):
    from .pressure import attractor_criterion, grid_candidates
    s = _system(cfg.system)
    X = grid_candidates(int(P["grid"]), P["jitter"])
    conf = {k: P[k] for k in ("eps_list", "n_list", "threshold", "shift", "method")}
    conf["seed"] = cfg.seed
    r = attractor_criterion(s, X, conf)
    est = r["estimate"]
    rows = [[q["n"], q["epsilon"], q["rate"], math.nan, q["size"], q["saturated"]] for q in est.rows]
    out = {"pressure": r["pressure"], "verdict": r["verdict"], "threshold": r["threshold"],
           "consistent_with_attractor": r["consistent_with_attractor"], "estimate": est.to_json()}
    return out, {"pressure": (["n", "epsilon", "estimate", "stderr", "size", "saturated"], rows)}


@experiment("volume-lemma", "Bowen-ball volume times the unstable Jacobian across n",
            "Bowen balls of fixed radius have volume comparable to 1/J^u f^n(x), with constants "
            "independent of n.",
            {"x": [0.3, 0.7], "ns": list(range(2, 9)), "eps": 0.1, "samples": 100000},
            system={"name": "cat-map"})
def _volume(cfg, P):
    from .pressure import volume_plateau
    s = _system(cfg.system)
    r = volume_plateau(s, _as_points(P["x"], "x"), P["ns"], float(P["eps"]), int(P["samples"]), cfg.seed)
    rows = [[q["n"], P["eps"], q["volume"], q["stderr"], q["jacobian"], q["product"]] for q in r["rows"]]
    return ({"ratio": r["ratio"], "any_below_resolution": r["any_below_resolution"], "rows": r["rows"]},
            {"volume": (["n", "epsilon", "estimate", "stderr", "jacobian", "product"], rows)})


@experiment("basin", "Birkhoff averages from Lebesgue-random initial points",
            "The equilibrium state of phi^u on an attractor is physical: time averages from a "
            "positive-volume set of initial points converge to its space average.",
            {"g": "cos1", "n_points": 100, "n_iters": 100000, "tolerance": None},
            system={"name": "cat-map"})
def _basin(cfg, P):
    from .srb import basin_experiment, make_observable
    s = _system(cfg.system)
    r = basin_experiment(s, make_observable(P["g"]), int(P["n_points"]), int(P["n_iters"]), cfg.seed,
                         P["tolerance"])
    rows = [[x[0], x[1], a] for x, a, _ in r.per_point]
    return r.to_json(), {"basin": (["x1", "x2", "time_average"], rows)}


@experiment("gibbs-vs-birkhoff", "Gibbs integral on the shift against Birkhoff averages through a Markov coding",
            "Through a Markov coding the equilibrium state of the shift potential is the physical "
            "measure, so cylinder integrals match time averages of coded orbits.",
            {"potential": {"kind": "parry"}, "observable": {"0": 1.0}, "n_points": 50, "n_iters": 20000},
            system={"name": "baker", "params": {"p": 0.5}})
def _gibbs_birkhoff(cfg, P):
    from .shift import bernoulli_potential, constant_potential
    from .srb import coding_for, gibbs_vs_birkhoff
    s = _system(cfg.system)
    coding = coding_for(s)
    kind = P["potential"].get("kind", "parry")
    if kind == "parry":
        pot = constant_potential(coding.sft)
    elif kind == "bernoulli":
        pot = bernoulli_potential(float(P["potential"]["p"]))
    else:
        raise ValidationError("potential must be parry or bernoulli")
    obs = {tuple(int(c) for c in k.split(",")): float(v) for k, v in P["observable"].items()}
    r = gibbs_vs_birkhoff(s, coding, pot, obs, int(P["n_points"]), int(P["n_iters"]), cfg.seed)
    return r, {}


@experiment("main-inequality", "Fitted constants in the stable-leaf estimate for E^u",
            "For y on the local stable leaf of x, the distance between E^u along the two orbits is "
            "bounded by M1 lam^(2n) D_0 + M2 omega(M3 lam^n d(x, y)).",
            {"x0": [0.3, 0.4], "leaf_ts": [0.002, 0.005, 0.01, 0.02, 0.04], "n_max": 12},
            system={"name": "perturbed", "params": {"eps": 0.01}})
def _main_ineq(cfg, P):
    from .grassmann import stable_leaf_points
    from .lemmas import verify_main_inequality
    s = _system(cfg.system)
    x0 = _as_points(P["x0"], "x0")
    r = verify_main_inequality(s, x0, stable_leaf_points(s, x0, P["leaf_ts"]), int(P["n_max"]))
    D, d = r.pop("D"), r.pop("d")
    rows = [[n, j, d[n, j], D[n, j]] for n in range(D.shape[0]) for j in range(D.shape[1])]
    return r, {"rows": (["n", "sample", "distance", "graph_distance"], rows)}


@experiment("horseshoe-build", "Cantor trees, the map g and the measure of Lambda",
            "With beta_n = 1/(n+10)^2 the product Cantor set K_J x K_J has measure "
            "(2 - sum beta_n)^2 > 0 while g is C^1.",
            {"depth": 10, "csv_depth": 6, "n_terms": 100000})
def _horseshoe(cfg, P):
    from .horseshoe import HorseshoeParams, build_g, lambda_measure
    hp = HorseshoeParams()
    g = build_g(hp, int(P["depth"]))
    lm = lambda_measure(hp, int(P["n_terms"]))
    out = {"lambda_measure": lm, "delta_0": float(hp.delta(0)), "leaf_slope_deviation": g.leaf_slope_deviation(),
           "band": [{"level": k, "min": a, "max": b, "band_lo": c, "band_hi": d} for k, (a, b, c, d) in enumerate(g.band)],
           "bookkeeping": {k: float(v) for k, v in g.tI.bookkeeping_error().items()}}
    rows = [[r["word"], r["left"], r["right"], r["gap_left"], r["gap_right"]]
            for r in g.tI.rows(min(int(P["csv_depth"]), g.depth))]
    return out, {"tree_I": (["word", "left", "right", "gap_left", "gap_right"], rows)}


@experiment("dini-certificate", "Certificate that the derivative of g has a non-Dini modulus",
            "delta_n <= omega(2^-n) for every n while sum delta_n diverges, so no Dini modulus "
            "controls g'.",
            {"depth": 20, "N": 10000})
def _dini_cert(cfg, P):
    from .horseshoe import HorseshoeParams, dini_violation_certificate
    c = dini_violation_certificate(HorseshoeParams(), int(P["depth"]), N=int(P["N"]))
    js = c.to_json()
    rows = [[r["n"], r["delta_n"], r["omega_bound"], r["partial_sum"]] for r in c.rows]
    return js, {"certificate": (["n", "delta_n", "omega_bound", "partial_sum"], rows)}


# ---------------------------------------------------------------------------
# config handling

def resolve_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    extra = set(raw) - CONFIG_KEYS
    if extra:
        raise ValidationError(f"unknown config keys: {sorted(extra)}")
    name = raw.get("experiment")
    if name not in REGISTRY:
        raise ValidationError(f"unknown experiment {name!r}; known: {sorted(REGISTRY)}")
    exp = REGISTRY[name]
    params = raw.get("parameters") or {}
    if not isinstance(params, dict):
        raise ValidationError("parameters must be an object")
    bad = set(params) - set(exp.defaults)
    if bad:
        raise ValidationError(f"unknown parameters for {name}: {sorted(bad)}")
    missing = [k for k in exp.required if k not in params]
    if missing:
        raise ValidationError(f"missing required parameters for {name}: {missing}")
    merged = copy.deepcopy(exp.defaults)
    merged.update(copy.deepcopy(params))
    system = raw.get("system", exp.default_system)
    if isinstance(system, str):
        system = {"name": system, "params": {}}
    if system is not None and not isinstance(system, dict):
        raise ValidationError("system must be a name or a descriptor object")
    if system is not None:
        system = {"name": system.get("name"), "params": dict(system.get("params", {}))}
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValidationError("seed must be a non-negative integer")
    det = raw.get("deterministic", True)
    if not isinstance(det, bool):
        raise ValidationError("deterministic must be a boolean")
    return ExperimentConfig(name, system, merged, seed, raw.get("output_dir"), det)


def default_output_dir(cfg: ExperimentConfig) -> Path:
    base = Path(os.environ.get(OUTPUT_ENV, "dinisrb-output"))
    return base / cfg.experiment


def run(config, write: bool = True) -> ExperimentReport:
    """Validate, dispatch, and (optionally) write manifest/summary/tables."""
    cfg = config if isinstance(config, ExperimentConfig) else resolve_config(config)
    exp = REGISTRY[cfg.experiment]
    t0 = time.perf_counter()
    summary, tables = exp.func(cfg, cfg.parameters)
    wall = time.perf_counter() - t0
    summary = _jsonable(summary)
    manifest = cfg.to_dict()
    out_dir = None
    paths = {}
    if write:
        out = Path(cfg.output_dir) if cfg.output_dir else default_output_dir(cfg)
        out.mkdir(parents=True, exist_ok=True)
        out_dir = str(out)
        manifest["output_dir"] = out_dir
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        for name, (header, rows) in tables.items():
            p = out / f"{name}.csv"
            _write_csv(p, header, rows)
            paths[name] = str(p)
        with open(out / "timing.json", "w") as fh:
            json.dump({"wall_time": wall}, fh)
    return ExperimentReport(manifest, paths, summary, wall, out_dir)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ValidationError(f"config is not valid JSON: {e}") from None
