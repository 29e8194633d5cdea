"""Command line front end: one subcommand per experiment plus `run --config`.

Exit codes: 0 success, 2 validation error, 3 numeric non-convergence.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import (BowenBallError, CodingMismatchError, ConvergenceError, DomainError, NonDiniError,
                     TransversalityError, ValidationError)
from .experiments import list_experiments, load_config, run

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE = 0, 2, 3

SUBCOMMANDS = {
    "audit-modulus": "modulus-audit",
    "splitting": "splitting",
    "verify-lemma": "lemma-verify",
    "rpf": "rpf",
    "pressure": "pressure",
    "attractor": "attractor-criterion",
    "volume": "volume-lemma",
    "basin": "basin",
    "gibbs": "gibbs-vs-birkhoff",
    "main-inequality": "main-inequality",
    "horseshoe": "horseshoe-build",
    "dini-cert": "dini-certificate",
}


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def _common(p):
    p.add_argument("--system", help="system name (e.g. cat-map, perturbed, baker, full-shift)")
    p.add_argument("--system-param", type=_kv, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--set", type=_kv, action="append", default=[], metavar="KEY=VALUE",
                   help="experiment parameter (value parsed as JSON when possible)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", help="defaults to $DINISRB_OUTPUT_DIR/<experiment>")
    p.add_argument("--deterministic", action="store_true",
                   help="sequential fixed-order summation (the only mode implemented)")
    p.add_argument("--no-write", action="store_true", help="print the summary without writing files")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dinisrb", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    sub.add_parser("list", help="print the experiment catalog")
    r = sub.add_parser("run", help="run an experiment from a JSON config or manifest")
    r.add_argument("--config", required=True)
    r.add_argument("--output-dir")
    r.add_argument("--deterministic", action="store_true")
    r.add_argument("--no-write", action="store_true")

    p = sub.add_parser("audit-modulus")
    _common(p)
    p.add_argument("--kind", choices=["power", "log_power", "linear"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--slope", type=float)

    p = sub.add_parser("splitting")
    _common(p)
    p.add_argument("--point", type=float, nargs=2)
    p.add_argument("--n-iter", type=int)

    p = sub.add_parser("verify-lemma")
    _common(p)
    p.add_argument("lemma", type=int, choices=[1, 2, 3, 4, 5])
    p.add_argument("--samples", type=int)

    p = sub.add_parser("rpf")
    _common(p)
    p.add_argument("--potential", choices=["zero", "constant", "bernoulli", "dini-example"])
    p.add_argument("--p", type=float, help="Bernoulli parameter")
    p.add_argument("--c", type=float, help="constant value")

    for name in ("pressure", "attractor"):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--eps", type=float, nargs="+")
        p.add_argument("--n", type=int, nargs="+")
        p.add_argument("--grid", type=int)
        if name == "pressure":
            p.add_argument("--potential", choices=["zero", "constant", "geometric"])

    p = sub.add_parser("volume")
    _common(p)
    p.add_argument("--x", type=float, nargs=2)
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--eps", type=float)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("basin")
    _common(p)
    p.add_argument("--g", help="observable: cos1, cos2, const")
    p.add_argument("--n-points", type=int)
    p.add_argument("--n-iters", type=int)

    for name in ("gibbs", "main-inequality"):
        _common(sub.add_parser(name))

    p = sub.add_parser("horseshoe")
    _common(p)
    p.add_argument("--depth", type=int)

    p = sub.add_parser("dini-cert")
    _common(p)
    p.add_argument("--depth", type=int)
    p.add_argument("--N", type=int)
    return ap


def _config_from_args(a) -> dict:
    exp = SUBCOMMANDS[a.cmd]
    params = dict(a.set)
    flags = {
        "point": "point", "n_iter": "n_iter", "eps": None, "n": None, "grid": "grid", "x": "x",
        "samples": None, "g": "g", "n_points": "n_points", "n_iters": "n_iters", "depth": "depth", "N": "N",
        "potential": None,
    }
    for attr, key in flags.items():
        v = getattr(a, attr, None)
        if v is None or key is None:
            continue
        params[key] = v
    if a.cmd in ("pressure", "attractor"):
        if a.eps is not None:
            params["eps_list"] = a.eps
        if a.n is not None:
            params["n_list"] = a.n
        if a.cmd == "pressure" and a.potential is not None:
            params["potential"] = a.potential
    if a.cmd == "volume":
        if a.eps is not None:
            params["eps"] = a.eps
        if a.n is not None:
            params["ns"] = a.n
        if a.samples is not None:
            params["samples"] = a.samples
    if a.cmd == "verify-lemma":
        params["lemma"] = a.lemma
        if a.samples is not None:
            key = {1: "n_pairs", 5: "n_pairs"}.get(a.lemma, "n_samples")
            params.setdefault("options", {})[key] = a.samples
    if a.cmd == "audit-modulus" and a.kind:
        mp = {"alpha": a.alpha, "beta": a.beta, "slope": a.slope}
        params["modulus"] = {"kind": a.kind, "params": {k: v for k, v in mp.items() if v is not None}}
    if a.cmd == "rpf" and a.potential:
        pot = {"kind": a.potential}
        if a.p is not None:
            pot["p"] = a.p
        if a.c is not None:
            pot["c"] = a.c
        params["potential"] = pot
    cfg = {"experiment": exp, "parameters": params, "seed": a.seed, "deterministic": True}
    if a.system:
        cfg["system"] = {"name": a.system, "params": dict(a.system_param)}
    if a.output_dir:
        cfg["output_dir"] = a.output_dir
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        if a.cmd == "list":
            print(json.dumps(list_experiments(), indent=2))
            return EXIT_OK
        if a.cmd == "run":
            cfg = load_config(a.config)
            if a.output_dir:
                cfg["output_dir"] = a.output_dir
            if a.deterministic:
                cfg["deterministic"] = True
        else:
            cfg = _config_from_args(a)
        rep = run(cfg, write=not a.no_write)
    except ConvergenceError as e:
        print(f"error: no convergence: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ValidationError, DomainError, NonDiniError, TransversalityError, BowenBallError,
            CodingMismatchError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    print(json.dumps({"experiment": rep.manifest["experiment"], "output_dir": rep.output_dir,
                      "wall_time": rep.wall_time, "summary": rep.summary}, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
