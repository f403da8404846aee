"""Command-line front end.

    exsparse model    --config cfg.json --out ints.txt
    exsparse bse eig  --model ints.txt --m 2 --k 3
    exsparse bse dyn  --model cfg.json --m 1 --t 5 --init site:0
    exsparse lcc solve --model cfg.json --m 2 --out run/
    exsparse probe    --m 1 --D 1 --Rc 1 --d 6
    exsparse estimate --method bse --input crystal --m 3 --D 3

Exit codes: 0 ok, 2 parse error, 3 invariant violation, 4 not converged,
5 resource guard.  Result JSON is byte-identical for identical inputs;
timestamps live only in ``manifest.json``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bse import bse_handle
from .estimator import (InvariantViolation, ScenarioConfig, render_table, scenario_dict,
                        table_one)
from .exbasis import ExcitationError, ExcitationString, SparseState
from .lcc import DegenerateDenominator, dump_amplitudes, lcc_solve
from .lightcone import Aborted, LightconeViolation, fit_volume_exponent, probe
from .model import (ConfigError, InconsistentIntegrals, ModelConfig, ParseError,
                    build_crystal, build_lattice, dump_integrals, fock, load_integrals)
from .solvers import ConvergenceParams, NotConverged, lowest_eigenpairs, propagate

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_NOT_CONVERGED, EXIT_GUARD = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


@dataclass
class RunManifest:
    command: str
    digest: str
    seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def config_digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# -- model input ---------------------------------------------------------------------------------

def _read_config_text(text: str, origin: str) -> dict:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{origin}: malformed JSON at byte {exc.pos}: {exc.msg}", EXIT_PARSE)
    if not isinstance(d, dict):
        raise CliError(f"{origin}: config must be a JSON object", EXIT_PARSE)
    return d


def load_model(spec: str | None):
    """``spec`` is a JSON document, a ``.json`` config path, or an integral file."""
    if spec is None:
        return build_lattice(ModelConfig()), {"config": ModelConfig().to_dict(), "mode": "lattice"}
    text = spec
    origin = "--model"
    path = Path(spec)
    if not spec.lstrip().startswith("{"):
        if not path.exists():
            raise CliError(f"no such model file: {spec}", EXIT_PARSE)
        text = path.read_text()
        origin = spec
        if not (path.suffix == ".json" or text.lstrip().startswith("{")):
            try:
                I = load_integrals(path)
            except ParseError as exc:
                raise CliError(f"{spec}: {exc}", EXIT_PARSE)
            except InconsistentIntegrals as exc:
                raise CliError(f"{spec}: {exc}", EXIT_INVARIANT)
            return I, {"integral_file_sha256": hashlib.sha256(text.encode()).hexdigest()}
    d = _read_config_text(text, origin)
    mode = d.pop("mode", "lattice")
    if mode not in ("lattice", "crystal"):
        raise CliError(f"{origin}: mode must be 'lattice' or 'crystal'", EXIT_INVARIANT)
    try:
        cfg = ModelConfig.from_dict(d)
    except ConfigError as exc:
        raise CliError(f"{origin}: {exc}", EXIT_INVARIANT)
    except TypeError as exc:
        raise CliError(f"{origin}: {exc}", EXIT_PARSE)
    I = build_crystal(cfg) if mode == "crystal" else build_lattice(cfg)
    return I, {"config": cfg.to_dict(), "mode": mode}


# -- output helpers -------------------------------------------------------------------------------

class Output:
    def __init__(self, args, command: str, payload: dict):
        self.args = args
        self.digest = config_digest({"command": command, **payload})
        self.dir = Path(args.out) if getattr(args, "out", None) else None
        self.manifest = RunManifest(command, self.digest, args.seed, started=_now())
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def info(self, msg: str) -> None:
        if not (self.args.quiet or self.args.json):
            print(msg)

    def result(self, name: str, data: dict, echo: bool = True) -> None:
        data = {"digest": self.digest, **data}
        text = json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"
        if self.dir is not None:
            path = self.dir / name
            path.write_text(text)
            self.manifest.outputs.append(name)
        if self.args.json:
            sys.stdout.write(text)
        elif echo and not self.args.quiet and self.dir is None:
            sys.stdout.write(text)

    def file(self, name: str) -> Path | None:
        if self.dir is None:
            return None
        self.manifest.outputs.append(name)
        return self.dir / name

    def close(self) -> None:
        if self.dir is not None:
            self.manifest.finished = _now()
            self.manifest.write(self.dir)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


def _seeded_start(keys: list, seed: int) -> SparseState:
    rng = np.random.default_rng(seed)
    return SparseState.from_dense(rng.standard_normal(len(keys)), keys)


def _params(args, **kw) -> ConvergenceParams:
    return ConvergenceParams(tol=args.tol, **kw)


# -- commands -------------------------------------------------------------------------------------

def cmd_model(args) -> int:
    if args.config is None and args.model is None:
        raise CliError("model needs --config or --model", EXIT_PARSE)
    I, meta = load_model(args.config if args.config is not None else args.model)
    try:
        fock(I)
    except InconsistentIntegrals as exc:
        raise CliError(str(exc), EXIT_INVARIANT)
    hist = {"charge_charge": 0, "charge_dipole": 0, "dipole_dipole": 0}
    names = ("charge_charge", "charge_dipole", "dipole_dipole")
    for (p, q, r, s), _ in I.nonzero_V("V"):
        hist[names[int(p != r) + int(q != s)]] += 1
    n_t = sum(1 for p in range(I.L) for q in range(p, I.L) if I.t(p, q))
    summary = {"L": I.L, "n_occ": I.n_occ, "D": I.D, "mode": I.mode, "t_entries": n_t,
               "V_classes": hist, "R_c": I.R_c, "R_loc": I.R_loc,
               "eps_screen": I.eps_screen, **meta}
    out = None
    if args.out:
        out = Path(args.out)
        if out.suffix == "" and (out.is_dir() or not out.exists() and args.out.endswith("/")):
            out.mkdir(parents=True, exist_ok=True)
            out = out / "ints.txt"
        out.parent.mkdir(parents=True, exist_ok=True)
        dump_integrals(I, out)
        summary["dump"] = out.name
        digest = config_digest({"command": "model", **meta})
        summary["digest"] = digest
        out.with_name(out.stem + ".summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if not args.quiet:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _start_string(I, m: int, where: str | None) -> ExcitationString:
    """``site:s`` puts the m excitons on sites s, s+1, ...; default is the middle."""
    n = I.n_occ
    if where is None:
        base = max(0, n // 2 - m // 2)
    else:
        if not where.startswith("site:"):
            raise CliError(f"--init must look like site:<int> (got {where!r})", EXIT_PARSE)
        try:
            base = int(where[5:])
        except ValueError:
            raise CliError(f"bad site in --init {where!r}", EXIT_PARSE)
    sites = list(range(base, base + m))
    if sites[-1] >= n or I.L != 2 * n:
        raise CliError("--init site needs a two-orbital-per-site model with room for m excitons",
                       EXIT_INVARIANT)
    holes = tuple(sorted(sites, reverse=True))
    parts = tuple(sorted((s + n for s in sites), reverse=True))
    return ExcitationString(holes, parts)


def cmd_bse(args) -> int:
    I, meta = load_model(args.model)
    payload = {"model": meta, "m": args.m, "action": args.action, "tol": args.tol,
               "seed": args.seed, "k": args.k, "t": args.t, "steps": args.steps,
               "init": args.init, "multi_scatter": args.multi_scatter}
    out = Output(args, "bse " + args.action, payload)
    try:
        h = bse_handle(I, args.m, multi_scatter=args.multi_scatter)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVARIANT)
    if args.action == "eig":
        keys = h.basis()
        v0 = _seeded_start(keys, args.seed)
        try:
            vals, vecs, it = lowest_eigenpairs(h, v0, _params(args, max_iter=args.max_iter),
                                               k=args.k, threads=args.threads)
            converged = True
        except NotConverged as exc:
            out.result("bse_eig.json", {"converged": False, "iterations": exc.iterations,
                                        "values": [exc.value], "residual": exc.residual})
            out.close()
            raise CliError(str(exc), EXIT_NOT_CONVERGED)
        residuals = []
        for e, v in zip(vals, vecs):
            r = h.apply(v, threads=args.threads).axpy(-e, v)
            residuals.append(r.norm())
        out.result("bse_eig.json", {"converged": converged, "iterations": it, "m": args.m,
                                    "dimension": len(keys), "values": vals,
                                    "residuals": residuals})
        out.close()
        return EXIT_OK
    # dynamics
    mu = _start_string(I, args.m, args.init)
    v = SparseState.unit(mu)
    lo, hi = h.gershgorin()
    p = _params(args, max_iter=max(args.max_iter, 10_000))
    steps = max(1, args.steps)
    dt = args.t / steps
    n = I.n_occ
    watch = [int(x) for x in args.sites.split(",")] if args.sites else [mu.particles[-1] - n]
    rows = []
    e0 = None
    for k in range(steps + 1):
        Av = h.apply(v, threads=args.threads)
        energy = float(v.dot(Av).real)
        e0 = energy if e0 is None else e0
        probs = []
        for site in watch:
            probs.append(float(sum(abs(a) ** 2 for s, a in v.entries.items()
                                   if site + n in s.particles)))
        rows.append((k * dt, v.support, float(v.norm()), energy, probs))
        if k < steps:
            v = propagate(h, v, dt, p, bounds=(lo, hi), threads=args.threads)
    path = out.file("bse_dyn.csv")
    lines = ["time,support,norm,energy," + ",".join(f"p_site{s}" for s in watch)]
    for t, sup, nrm, en, probs in rows:
        lines.append(f"{t!r},{sup},{nrm!r},{en!r}," + ",".join(repr(x) for x in probs))
    text = "\n".join(lines) + "\n"
    if path is not None:
        path.write_text(text)
    elif not args.quiet and not args.json:
        sys.stdout.write(text)
    out.result("bse_dyn.json", {"init": str(mu), "steps": steps, "T": args.t,
                                "bounds": [lo, hi],
                                "max_norm_error": max(abs(r[2] - 1) for r in rows),
                                "max_energy_drift": max(abs(r[3] - e0) for r in rows),
                                "final_support": rows[-1][1]})
    out.close()
    return EXIT_OK


def cmd_lcc(args) -> int:
    I, meta = load_model(args.model)
    payload = {"model": meta, "m": args.m, "tol": args.tol, "max_iter": args.max_iter}
    out = Output(args, "lcc solve", payload)
    spec = I.spec(args.m)
    params = None
    if args.max_iter is not None:
        params = ConvergenceParams(tol=args.tol, max_iter=args.max_iter)
    try:
        t, report = lcc_solve(I, spec, tol=args.tol, params=params, threads=args.threads)
    except DegenerateDenominator as exc:
        raise CliError(str(exc), EXIT_INVARIANT)
    except NotConverged as exc:
        data = exc.report.to_dict() if exc.report else {"converged": False}
        out.result("lcc_report.json", data)
        if exc.x is not None and (p := out.file("amplitudes.txt")) is not None:
            dump_amplitudes(exc.x, spec, p)
        out.close()
        raise CliError(str(exc), EXIT_NOT_CONVERGED)
    data = report.to_dict()
    data["support"] = t.support
    out.result("lcc_report.json", data)
    if (p := out.file("amplitudes.txt")) is not None:
        dump_amplitudes(t, spec, p)
    out.close()
    return EXIT_OK


def cmd_probe(args) -> int:
    if args.model is not None:
        I, meta = load_model(args.model)
    else:
        n = args.n_sites or probe_side(args.m, args.D, args.Rc, args.d)
        cfg = ModelConfig(D=args.D, n_sites=n, R_c=args.Rc, R_loc=min(1.0, args.Rc))
        try:
            cfg.validate()
        except ConfigError as exc:
            raise CliError(str(exc), EXIT_INVARIANT)
        I = build_lattice(cfg)
        meta = {"config": cfg.to_dict(), "mode": "lattice"}
    payload = {"model": meta, "m": args.m, "d": args.d, "max_support": args.max_support,
               "init": args.init}
    out = Output(args, "probe", payload)
    h = bse_handle(I, args.m)
    mu = _probe_start(I, args.m, args.init)
    try:
        trace = probe(h, mu, args.d, max_support=args.max_support)
    except Aborted as exc:
        trace = exc.trace
        _write_trace(out, trace, None)
        out.close()
        raise CliError(str(exc), EXIT_GUARD)
    except LightconeViolation as exc:
        raise CliError(str(exc), EXIT_INVARIANT)
    try:
        fit = fit_volume_exponent(trace)
    except ValueError:
        fit = None
    _write_trace(out, trace, fit)
    out.close()
    return EXIT_OK


def probe_side(m: int, D: int, R_c: float, d: int) -> int:
    """Smallest grid side keeping ``d`` steps in the pre-saturation window:
    the lightcone must fit and the basis must exceed 10x its volume bound."""
    reach = 2 * d * math.ceil(R_c) + 1
    side = reach + 2 * m + 2
    bound = float(reach) ** (2 * m * D)
    while math.comb(side ** D, m) ** 2 < 10 * bound:
        side += 1
    return side


def _probe_start(I, m, where):
    n = I.n_occ
    if I.D == 1 or where is not None:
        return _start_string(I, m, where)
    # centre of a square/cubic grid
    side = round(n ** (1 / I.D))
    centre = sum((side // 2) * side ** k for k in range(I.D))
    sites = [centre + k for k in range(m)]
    return ExcitationString(tuple(sorted(sites, reverse=True)),
                            tuple(sorted((s + n for s in sites), reverse=True)))


def _write_trace(out: Output, trace, fit) -> None:
    if (p := out.file("trace.csv")) is not None:
        trace.to_csv(p)
    data = {"trace": trace.to_dict(), "start": str(trace.start)}
    if fit is not None:
        data["fit"] = {"exponent": fit.exponent, "raw_exponent": fit.raw_exponent,
                       "window": fit.window, "variable": fit.variable,
                       "expected": 2 * trace.m * trace.D}
    out.result("probe.json", data)


def cmd_estimate(args) -> int:
    payload = {"method": args.method, "input": args.input, "m": args.m, "D": args.D,
               "com_delocalized": args.com_delocalized, "overlap": args.overlap}
    out = Output(args, "estimate", payload)
    tab = table_one(args.m, args.D)
    data = {"table": tab}
    if args.method is not None or args.input is not None:
        try:
            sc = ScenarioConfig(args.method or "bse", args.input or "integrals", args.m, args.D,
                                com_delocalized=args.com_delocalized,
                                include_overlap=args.overlap)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INVARIANT)
        data["scenario"] = scenario_dict(sc)
    if not (args.quiet or args.json):
        print(render_table(tab), end="")
        if "scenario" in data:
            s = data["scenario"]
            print(f"\n{args.method or 'bse'}/{args.input or 'integrals'}: quantum {s['quantum_cost']['expr']}, "
                  f"ratio {s['ratio']['expr']}, power ({', '.join(s['power'])})")
    out.result("estimate.json", data, echo=False)
    if (p := out.file("table.txt")) is not None:
        p.write_text(render_table(tab))
    out.close()
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    # one instance per subcommand: parents share Action objects, so a
    # set_defaults on one subparser would leak into the others
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="integral file, JSON config file, or inline JSON")
    common.add_argument("--m", type=int, default=1)
    common.add_argument("--D", type=int, default=1)
    common.add_argument("--Rc", type=float, default=1.0)
    common.add_argument("--tol", type=float, default=1e-8)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory (model: dump path)")
    common.add_argument("--quiet", action="store_true", help="errors only")
    common.add_argument("--json", action="store_true", help="machine output only")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--max-support", type=int, default=50_000_000)
    return common


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exsparse", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", parents=[_common()], help="build and dump integrals")
    p.add_argument("--config", help="JSON config (path or inline)")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("bse", parents=[_common()], help="multi-exciton eigenvalues or dynamics")
    p.add_argument("action", choices=("eig", "dyn"))
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--init", default=None, help="site:<int>")
    p.add_argument("--sites", default=None, help="comma-separated sites to watch")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--multi-scatter", action="store_true")
    p.set_defaults(func=cmd_bse)

    p = sub.add_parser("lcc", parents=[_common()], help="linearized coupled cluster")
    p.add_argument("action", choices=("solve",))
    p.add_argument("--max-iter", type=int, default=None)
    p.set_defaults(func=cmd_lcc, m=2)

    p = sub.add_parser("probe", parents=[_common()], help="lightcone support growth")
    p.add_argument("--d", type=int, default=6)
    p.add_argument("--n-sites", type=int, default=None)
    p.add_argument("--init", default=None)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("estimate", parents=[_common()], help="resource table")
    p.add_argument("--method", choices=("bse", "lcc"))
    p.add_argument("--input", choices=("integrals", "atomic", "crystal"))
    p.add_argument("--com-delocalized", action="store_true")
    p.add_argument("--overlap", action="store_true", help="include 1/gamma")
    # the reference table is for m = 3, D = 3
    p.set_defaults(func=cmd_estimate, m=3, D=3)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, InvariantViolation, InconsistentIntegrals, ExcitationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except Aborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
