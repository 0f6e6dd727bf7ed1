"""Command-line entry point: ``crgame {run,sweep,oracle,reproduce,baseline}``.

Errors are printed to stderr as a one-line JSON record
``{"error": <kind>, "message": ..., "field": ...}`` and the exit code is
nonzero (2 for bad input, 1 for anything else).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import game as gm
from . import metrics
from . import oracle
from .units import ScenarioError, default_scenario

log = logging.getLogger("crgame")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_doc(path) -> dict:
    import yaml

    if path is None:
        return default_scenario()
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    return doc


def _seed(args, doc) -> int:
    if args.seed is not None:
        return args.seed
    return int((doc.get("run") or {}).get("seed", 0))


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_matrix_csv(matrix, path) -> Path:
    """K x S matrix with header s0..s{S-1}, one row per user."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"s{s}" for s in range(matrix.shape[1])])
        for row in matrix:
            w.writerow([repr(float(x)) for x in row])
    return Path(path)


def read_matrix_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True, default=_json_default))


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x).__name__)


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    doc = _load_doc(args.config)
    seed = _seed(args, doc)
    out = _out(args)
    traj = out / "trajectory.csv"
    res = ex.simulate(doc, seed, mode=args.mode, iterations=args.iterations,
                      certify="gap", log_stride=args.log_stride, csv_path=traj)
    row = {"seed": seed, **ex.outcome_row(res)}
    cols = ["seed"] + ex.ROW_COLUMNS[2:]
    summary = ex.write_csv([row], out / "summary.csv", cols)
    powers = write_matrix_csv(res.record.final_powers, out / "powers.csv")
    ex.write_manifest(out / "run_manifest.json", "run", [seed], None, doc,
                      [traj, summary, powers])
    _emit({k: row[k] for k in ("termination", "converged_at", "iterations_run", "psi_mean",
                               "su_rate_bits", "br_gap_max")} | {"out": str(out)})
    return 0


def cmd_sweep(args) -> int:
    import yaml

    if args.config is None:
        raise UsageError("sweep needs --config <sweep file>")
    spec_doc = yaml.safe_load(Path(args.config).read_text())
    if not isinstance(spec_doc, dict):
        raise ScenarioError("<root>", "sweep file must be a mapping")
    if isinstance(spec_doc.get("base"), str) and not Path(spec_doc["base"]).is_absolute():
        spec_doc["base"] = str(Path(args.config).parent / spec_doc["base"])
    if args.mode is not None:
        spec_doc["mode"] = args.mode
    if args.scale is not None:
        factor = float(args.scale)
        if not factor > 0:
            raise ScenarioError("--scale", "factor must be positive")
        spec_doc["replications"] = max(1, int(round(int(spec_doc.get("replications", 1)) * factor)))
        spec_doc.pop("seeds", None)
    if args.seed is not None:
        spec_doc["seeds"] = [args.seed + r for r in range(int(spec_doc.get("replications", 1)))]
    spec = ex.SweepSpec.from_dict(spec_doc)
    out = _out(args)
    rows = ex.run_sweep(spec, workers=args.workers)
    path = ex.write_csv(rows, out / "sweep.csv", ex.sweep_columns(spec),
                        f"sweep over {spec.parameter}")
    ex.write_manifest(out / "sweep_manifest.json", "sweep", spec.seeds, None, spec.to_dict(),
                      [path])
    failed = sum(r["status"] != "ok" for r in rows)
    _emit({"rows": len(rows), "failed": failed, "out": str(path)})
    return 0


def cmd_oracle(args) -> int:
    doc = _load_doc(args.config)
    seed = _seed(args, doc)
    out = _out(args)
    mode = args.mode or (doc.get("run") or {}).get("mode", "static")
    game, proc = ex.build_game(doc, seed, mode)
    if mode == "ergodic":
        if args.profile:
            raise UsageError("--profile is only supported in static mode")
        samples = proc.draw(args.samples)
        cert = oracle.maximize_sampled_potential(game, samples)
    elif args.profile:
        p = read_matrix_csv(args.profile)
        if p.shape != game.gains.shape:
            raise ScenarioError("--profile", f"expected a {game.gains.shape} matrix, got {p.shape}")
        if not gm.is_feasible(p, game.max_power):
            raise ScenarioError("--profile", "profile violates the power constraints")
        cert = oracle.certify(game, p, method="given")
        cert.converged = bool(cert.kkt_residual <= 1e-6)
    else:
        cert = oracle.maximize_potential(game)
    write_matrix_csv(cert.p_star, out / "equilibrium.csv")
    payload = {
        "mode": mode, "method": cert.method, "V_star": cert.V_star,
        "kkt_residual": cert.kkt_residual, "br_gap": cert.br_gap, "converged": cert.converged,
    }
    (out / "certificate.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")
    _emit(payload | {"out": str(out)})
    return 0 if cert.converged or args.profile else 1


def cmd_reproduce(args) -> int:
    paths = ex.reproduce_figure(args.figure, args.out, seed=args.seed or 0,
                                scale=args.scale or "full", workers=args.workers)
    _emit({"figure": args.figure, "files": [str(p) for p in paths]})
    return 0


def cmd_baseline(args) -> int:
    doc = _load_doc(args.config)
    seed = _seed(args, doc)
    if (args.mode or "static") != "static":
        raise UsageError("the uniform baseline is defined for static channels only")
    out = _out(args)
    game, _ = ex.build_game(doc, seed)
    rep = metrics.uniform_baseline(game)
    row = {"seed": seed, **rep.row()}
    path = ex.write_csv([row], out / "baseline.csv", list(row))
    powers = write_matrix_csv(metrics.uniform_profile(game), out / "baseline_powers.csv")
    ex.write_manifest(out / "baseline_manifest.json", "baseline", [seed], None, doc,
                      [path, powers])
    _emit({"psi_mean": rep.psi_mean, "su_rate_bits": rep.su_rate_bits,
           "pu_rate_nats": rep.pu_rate_nats, "revenue": rep.revenue, "out": str(path)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="scenario YAML (sweep: sweep YAML)")
    common.add_argument("--seed", type=int, help="channel / replication seed")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--scale", help="full, ci or a positive factor")
    common.add_argument("--mode", choices=("static", "ergodic"))
    common.add_argument("--workers", type=int, default=1, help="parallel processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="crgame", description="Priced power allocation: learning, oracle, sweeps.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", parents=[common], help="run XL on one scenario")
    r.add_argument("--iterations", type=int)
    r.add_argument("--log-stride", type=int, default=1)
    r.set_defaults(func=cmd_run)
    sub.add_parser("sweep", parents=[common], help="run a sweep file").set_defaults(func=cmd_sweep)
    o = sub.add_parser("oracle", parents=[common], help="maximize the potential / certify a profile")
    o.add_argument("--profile", help="K x S power CSV to certify instead of solving")
    o.add_argument("--samples", type=int, default=10_000, help="fading draws in ergodic mode")
    o.set_defaults(func=cmd_oracle)
    f = sub.add_parser("reproduce", parents=[common], help="run a figure preset")
    f.add_argument("figure", choices=sorted(ex.PRESETS))
    f.set_defaults(func=cmd_reproduce)
    sub.add_parser("baseline", parents=[common],
                   help="uniform full-power allocation metrics").set_defaults(func=cmd_baseline)
    return p


def _fail(kind: str, exc: Exception, code: int, field=None) -> int:
    record = {"error": kind, "message": str(exc)}
    if field is not None:
        record["field"] = field
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except ScenarioError as exc:
        return _fail("scenario", exc, 2, exc.field)
    except (FileNotFoundError, IsADirectoryError) as exc:
        return _fail("file", exc, 2)
    except Exception as exc:  # noqa: BLE001  machine-readable record for anything else
        return _fail(type(exc).__name__, exc, 1)


if __name__ == "__main__":
    sys.exit(main())
