"""Command line front end: ``hylosol {solve,sweep,hylomorphy,evolve,check}``.

Every subcommand reads one JSON config.  Exit codes: 0 success, 1 bad
config or unusable paths, 2 the numerics did not converge (or the run was
aborted).  ``HYLO_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .fieldio import write_field
from .functionals import PhysicsConfig, coercivity_params
from .grid import BoxGrid3, RadialGrid
from .model import LatticePotential, NonlinearityModel, check_assumptions

log = logging.getLogger("hylosol")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# --- configuration -----------------------------------------------------------

def _section(doc, name, required=False):
    val = doc.get(name, None)
    if val is None:
        if required:
            raise ConfigError(f"{name}: section is required")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"{name}: expected an object")
    return val


def _build(cls, data, where):
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_grid(spec, where="grid"):
    kind = spec.get("kind", "radial")
    try:
        if kind == "radial":
            return RadialGrid(int(spec.get("n", 1024)), float(spec.get("r_max", 40.0)))
        if kind == "box":
            n = spec.get("n", 64)
            L = spec.get("L", 20.0)
            n = tuple(int(v) for v in np.broadcast_to(n, 3))
            L = tuple(float(v) for v in np.broadcast_to(L, 3))
            return BoxGrid3(n, L)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: expected 'radial' or 'box', got {kind!r}")


def parse_physics(spec):
    model = _build(NonlinearityModel, _section(spec, "model"), "physics.model")
    pot_spec = dict(_section(spec, "potential"))
    pot = _build(LatticePotential, pot_spec, "physics.potential") if pot_spec \
        else LatticePotential.zero()
    q = spec.get("q", 0.0)
    if not isinstance(q, (int, float)) or not q >= 0:
        raise ConfigError("physics.q: must be a nonnegative number")
    return PhysicsConfig(float(q), model, pot)


@dataclass
class RunConfig:
    physics: PhysicsConfig
    grid: object
    minimizer: object
    raw: dict = field(repr=False)
    digest: str = ""

    def section(self, name):
        return _section(self.raw, name)


def load_config(path) -> RunConfig:
    from .minimizer import MinimizerConfig

    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    physics = parse_physics(_section(doc, "physics"))
    grid = parse_grid(_section(doc, "grid"))
    mcfg = _build(MinimizerConfig, _section(doc, "minimizer"), "minimizer")
    rep = check_assumptions(physics.model, physics.potential,
                            grid if grid.kind == "box" else None)
    if not rep.ok:
        raise ConfigError("physics: assumption check failed: " + "; ".join(
            f"{k} ({rep.checks[k]['detail']})" for k in rep.failures()))
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canon.encode()).hexdigest()[:16]
    return RunConfig(physics, grid, mcfg, doc, digest)


# --- output helpers -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, digest):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={digest}, version={__version__}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])
    os.replace(tmp, path)


def write_json(path, obj):
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


FAMILY_COLUMNS = ("delta", "c", "E", "Lambda", "omega", "residual", "iterations",
                  "Phi", "E_plus_aCs")


def _coercivity(cfg):
    try:
        return coercivity_params(cfg.model)
    except ValueError as exc:
        log.info("coercivity constants unavailable: %s", exc)
        return None


def _dump_record(out, idx, rec):
    write_field(rec.u, os.path.join(out, f"u_{idx:04d}.hfd"))
    write_field(rec.phi, os.path.join(out, f"phi_{idx:04d}.hfd"))


def _family_rows(records):
    rows = []
    for r in records:
        row = r.row()
        if not r.converged:
            row["iterations"] = f"{r.iterations} ({r.status})"
        rows.append(row)
    return rows


# --- subcommands ----------------------------------------------------------------------

def cmd_solve(rc: RunConfig, args):
    from .minimizer import MinimizerError, minimize_fixed_charge

    spec = rc.section("solve")
    c = spec.get("c")
    if not isinstance(c, (int, float)) or not c > 0:
        raise ConfigError("solve.c: target charge must be a positive number")
    cp = _coercivity(rc.physics)
    try:
        rec = minimize_fixed_charge(float(c), rc.grid, rc.physics, rc.minimizer, cp=cp)
        code = EXIT_OK
    except MinimizerError as exc:
        log.error("%s", exc)
        rec, code = exc.record, EXIT_NUMERICS
    if rec is None:
        return EXIT_NUMERICS
    write_csv(os.path.join(args.out, "family.csv"), FAMILY_COLUMNS, _family_rows([rec]),
              rc.digest)
    _dump_record(args.out, 0, rec)
    print(f"c={rec.c:.6g} E={rec.e:.10g} Lambda={rec.Lambda:.8g} omega={rec.omega:.8g} "
          f"residual={rec.residual:.3g} status={rec.status}")
    return code


def cmd_sweep(rc: RunConfig, args):
    from dataclasses import replace

    from .minimizer import (CHAINS_CHARGE, CHAINS_DELTA, MinimizerError,
                            minimize_fixed_charge, minimize_j_delta, monotonicity_report,
                            sweep)

    spec = rc.section("sweep")
    if "deltas" in spec:
        values, mode = spec["deltas"], "j-delta"
    elif "charges" in spec:
        values, mode = spec["charges"], "fixed-charge"
    else:
        raise ConfigError("sweep: give either 'deltas' or 'charges'")
    if not isinstance(values, list) or not values or \
            not all(isinstance(v, (int, float)) and v > 0 for v in values):
        raise ConfigError("sweep: values must be a nonempty list of positive numbers")
    if values != sorted(values):
        raise ConfigError("sweep: values must be sorted ascending")
    mcfg = replace(rc.minimizer, mode=mode)
    cp = _coercivity(rc.physics)
    if mode == "j-delta" and cp is None:
        raise ConfigError("sweep.deltas: J_delta needs coercivity constants (mu > 0, 2 < p < 10/3)")
    seed_charge = spec.get("seed_charge")

    if args.no_warm_start:
        def one(v):
            try:
                if mode == "j-delta":
                    return minimize_j_delta(v, rc.grid, rc.physics, cp, mcfg,
                                            seed_charge=seed_charge)
                return minimize_fixed_charge(v, rc.grid, rc.physics, mcfg, cp=cp)
            except MinimizerError as exc:
                exc.record.converged = False
                return exc.record

        with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
            records = list(pool.map(one, values))
        chains = CHAINS_DELTA if mode == "j-delta" else CHAINS_CHARGE
        report = monotonicity_report(records, chains)
    else:
        res = sweep(values, rc.grid, rc.physics, mcfg, cp=cp, seed_charge=seed_charge)
        records, report = res.records, res.report
    write_csv(os.path.join(args.out, "family.csv"), FAMILY_COLUMNS, _family_rows(records),
              rc.digest)
    for i, rec in enumerate(records):
        _dump_record(args.out, i, rec)
    summary = {"mode": mode, "values": values, "chains": report,
               "converged": [bool(r.converged) for r in records],
               "status": [r.status for r in records]}
    write_json(os.path.join(args.out, "monotonicity_report.json"), summary)
    for name, item in report.items():
        print(f"{name:24s} {'PASS' if item['passed'] else 'FAIL'}")
    return EXIT_OK if all(r.converged for r in records) else EXIT_NUMERICS


def cmd_hylomorphy(rc: RunConfig, args):
    from .hylomorphy import R_SWEEP, HylomorphyError, check_hylomorphy, q_threshold

    spec = rc.section("hylomorphy")
    radii = tuple(float(r) for r in spec.get("radii", R_SWEEP))
    s0 = spec.get("s0")
    rep = check_hylomorphy(rc.physics, radii, s0)
    if spec.get("q_threshold", True) and rep.certified:
        try:
            rep.q_threshold = q_threshold(rc.physics, radii=radii, s0=s0)
        except HylomorphyError as exc:
            log.warning("q threshold: %s", exc)
    cols = ("R", "Lambda", "kinetic", "V_term", "N_term", "field_term", "certified")
    write_csv(os.path.join(args.out, "hylomorphy.csv"), cols, rep.table(), rc.digest)
    write_json(os.path.join(args.out, "certificate.json"), rep.certificate())
    print(f"certified={rep.certified} best_R={rep.best_R} lambda_best={rep.lambda_best} "
          f"({rep.message})")
    return EXIT_OK


def build_box_soliton(rc: RunConfig, spec, box):
    """Radial minimizer at charge ``c``, embedded and polished on ``box``."""
    from .minimizer import MinimizerConfig, embed_radial, minimize_fixed_charge

    c = spec.get("c")
    if not isinstance(c, (int, float)) or not c > 0:
        raise ConfigError("evolve.c: soliton charge must be a positive number")
    seed_spec = spec.get("radial_seed", {"kind": "radial", "n": 1024, "r_max": 40.0})
    radial = parse_grid(dict(seed_spec, kind="radial"), "evolve.radial_seed")
    # a radial grid cannot carry the lattice; the seed ignores it
    radial_cfg = PhysicsConfig(rc.physics.q, rc.physics.model)
    rr = minimize_fixed_charge(float(c), radial, radial_cfg, rc.minimizer)
    polish = MinimizerConfig(tol_energy=1e-13, tol_residual=spec.get("polish_tol", 1e-8),
                             max_iter=rc.minimizer.max_iter)
    return minimize_fixed_charge(float(c), box, rc.physics, polish, seed=embed_radial(rr.u, box))


def cmd_evolve(rc: RunConfig, args):
    from .dynamics import EvolutionAborted, EvolutionConfig, stability_experiment
    from .minimizer import MinimizerError

    spec = rc.section("evolve")
    box = parse_grid(dict(_section(spec, "grid") or {"n": 64, "L": 20.0}, kind="box"),
                     "evolve.grid")
    try:
        ecfg = EvolutionConfig(float(spec.get("dt", 5e-3)), float(spec.get("T", 10.0)), box,
                               rc.physics, int(spec.get("stride", 20)),
                               measure_plans=bool(spec.get("measure_plans", False)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"evolve: {exc}") from exc
    try:
        rec = build_box_soliton(rc, spec, box)
    except MinimizerError as exc:
        log.error("soliton construction failed: %s", exc)
        return EXIT_NUMERICS
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    steps = rc.physics.potential.lattice_steps(box)
    try:
        verdict = stability_experiment(rec, float(spec.get("eta", 0.01)), ecfg, seed=seed,
                                       factor=float(spec.get("factor", 10.0)),
                                       control=bool(spec.get("control", True)),
                                       lattice_steps=steps)
    except ValueError as exc:
        raise ConfigError(f"evolve: {exc}") from exc
    except EvolutionAborted as exc:
        log.error("%s", exc)
        write_csv(os.path.join(args.out, "trace.csv"), exc.trace.COLUMNS, exc.trace.rows(),
                  rc.digest)
        return EXIT_NUMERICS
    tr = verdict.trace
    write_csv(os.path.join(args.out, "trace.csv"), tr.COLUMNS, tr.rows(), rc.digest)
    if verdict.control_trace is not None:
        ct = verdict.control_trace
        write_csv(os.path.join(args.out, "control_trace.csv"), ct.COLUMNS, ct.rows(),
                  rc.digest)
    out = verdict.as_dict()
    out.update(seed=seed, soliton={"c": rec.c, "E": rec.e, "Lambda": rec.Lambda,
                                   "omega": rec.omega, "residual": rec.residual},
               phase_rate=tr.phase_rate, C_drift=tr.relative_drift("C"),
               E_drift=tr.relative_drift("E"))
    write_json(os.path.join(args.out, "verdict.json"), out)
    write_field(rec.u, os.path.join(args.out, "soliton.hfd"))
    print(f"verdict={verdict.verdict} control={verdict.control_verdict}")
    return EXIT_OK


def cmd_check(rc: RunConfig, args):
    from .checks import run_checks

    results = run_checks(rc.physics)
    width = max(len(r[0]) for r in results)
    for name, ok, detail in results:
        print(f"{name:{width}s}  {'PASS' if ok else 'FAIL'}  {detail}")
    return EXIT_OK if all(r[1] for r in results) else EXIT_NUMERICS


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "hylomorphy": cmd_hylomorphy,
            "evolve": cmd_evolve, "check": cmd_check}


def build_parser():
    p = argparse.ArgumentParser(
        prog="hylosol",
        description="Hylomorphic solitons of the Schroedinger-Poisson system.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "minimize the energy at one fixed charge",
        "sweep": "soliton family over a delta or charge list, with monotonicity report",
        "hylomorphy": "certify inf Lambda < E0 with the trapezoid test family",
        "evolve": "time evolution and orbital stability experiment",
        "check": "run the built-in invariant suite",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent sweep entries")
        sp.add_argument("--seed", type=int, default=None, help="seed for perturbation noise")
        sp.add_argument("--no-warm-start", action="store_true",
                        help="solve sweep entries independently (allows --threads)")
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("HYLO_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rc = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        if not os.access(args.out, os.W_OK):
            raise ConfigError(f"output directory {args.out} is not writable")
        t0 = time.perf_counter()
        code = COMMANDS[args.command](rc, args)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
