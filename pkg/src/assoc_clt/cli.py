"""Command-line front end.

Exit codes: 0 success / consistent, 1 inconsistent (or slow variation not
supported), 2 invalid config, 3 inconclusive, 4 computation or synthesis
failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import config as cfg
from .blocking import BlockingPlan, build_schedule, choose_p, corridor_variance_bound, partition
from .cltlab import (
    CONSISTENT,
    INCONSISTENT,
    EXACT,
    Thresholds,
    q_certificate,
    run_clt,
    clt_verdict,
)
from .covariance import (
    k_ball_euclid,
    k_ball_sup,
    k_rect,
    model_from_descriptor,
    variance_exact,
)
from .fields import sampler_from_descriptor
from .lattice import Box, MultiIndex, as_index, box_points, product
from .slowvar import constant, kx_function, log_product, power_function, probe

EXIT_OK = 0
EXIT_INCONSISTENT = 1
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3
EXIT_FAILURE = 4
SEED_ENV = "ASSOC_CLT_SEED"
MAX_CLI_DIM = 4


class StageTimer:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.totals: dict[str, float] = defaultdict(float)
        self._open: dict[str, float] = {}

    def start(self, name):
        self._open[name] = time.perf_counter()

    def stop(self, name):
        self.totals[name] += time.perf_counter() - self._open.pop(name)

    def stage(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                timer.start(name)

            def __exit__(self, *exc):
                timer.stop(name)

        return _Ctx()

    def dump(self, stream=None):
        if not self.enabled:
            return
        stream = stream or sys.stderr
        for name, secs in self.totals.items():
            print(f"[profile] {name:<12s} {secs:9.4f} s", file=stream)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dims_ok(d: int) -> None:
    if d > MAX_CLI_DIM:
        raise cfg.ConfigError(f"dimension {d} exceeds the CLI limit of {MAX_CLI_DIM}")


def _resolve_seed(args, conf) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise cfg.ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if "seed" in conf:
        return conf["seed"]
    return conf.get("sampler", {}).get("seed", 0)


# ---------------------------------------------------------------------------
# commands; each returns (exit_code, result dict, extra files)


def cmd_variance(conf, args, timer):
    model = model_from_descriptor(conf["model"])
    _dims_ok(model.dimension)
    rows = []
    with timer.stage("variance"):
        for n in conf["n_grid"]:
            n = as_index(n, model.dimension)
            var = variance_exact(model, n)
            nk = product(n) * k_rect(model, n)
            rows.append({"n": list(n), "var_exact": var, "n_kx": nk, "ratio": var / nk})
    return EXIT_OK, {"rows": rows}, {}


def cmd_kfun(conf, args, timer):
    model = model_from_descriptor(conf["model"])
    d = model.dimension
    _dims_ok(d)
    rows = []
    with timer.stage("kfun"):
        for r in conf["r_grid"]:
            kb, ks = k_ball_euclid(model, r), k_ball_sup(model, r)
            kb_wide = k_ball_euclid(model, math.ceil(r * math.sqrt(d)))
            rows.append({
                "r": r, "k_ball": kb, "k_sup": ks, "k_ball_scaled": kb_wide,
                "k_rect": k_rect(model, [r] * d) if r >= 1 else None,
                "containment_holds": kb <= ks * (1 + 1e-12) and ks <= kb_wide * (1 + 1e-12),
            })
    sus = model.susceptibility()
    return EXIT_OK, {"rows": rows, "susceptibility": sus, "diverged": math.isinf(sus)}, {}


def _slow_function(desc):
    kind = desc["kind"]
    if kind == "kx":
        if "model" not in desc:
            raise cfg.ConfigError("missing required field 'function/model'")
        return kx_function(model_from_descriptor(desc["model"]))
    d = desc.get("dimension", 1)
    if kind == "log_product":
        return log_product(d)
    if kind == "constant":
        return constant(d)
    return power_function(d, desc.get("beta", 1.0))


def cmd_svcheck(conf, args, timer):
    L = _slow_function(conf["function"])
    _dims_ok(L.dimension)
    a = conf["a"]
    if len(a) == 1 and L.dimension > 1:
        a = a * L.dimension
    with timer.stage("svcheck"):
        rep = probe(L, a, conf.get("schedule"), conf.get("tolerance", 0.05))
    rows = [{"x": list(x), "ratio": float(r)} for x, r in zip(rep.schedule, rep.ratios)]
    result = {"a": list(rep.a), "rows": rows, "final_ratio": rep.final_ratio,
              "tolerance": rep.tolerance, "consistent": rep.consistent, "message": rep.message}
    return (EXIT_OK if rep.consistent else EXIT_INCONSISTENT), result, {}


def _schedule_for(model, n_max, sched_conf):
    sched_conf = sched_conf or {}
    cap = sched_conf.get("cap")
    if cap is None:
        cap = max(2**24 if model.dimension == 1 else 2**12, 1 << (max(n_max) - 1).bit_length())
    return build_schedule(kx_function(model), sched_conf.get("R_seq"), cap=cap)


def cmd_blocking(conf, args, timer):
    n = as_index(conf["n"])
    _dims_ok(n.dim)
    model = model_from_descriptor(conf["model"]) if "model" in conf else None
    with timer.stage("blocking"):
        if "q" in conf:
            q = as_index(conf["q"], n.dim)
            p = as_index(conf["p"], n.dim) if "p" in conf else choose_p(n, q)
        elif "p" in conf:
            raise cfg.ConfigError("field 'p' given without 'q'")
        elif model is not None:
            sched = _schedule_for(model, n, conf.get("schedule"))
            q = sched.q_of(n)
            p = choose_p(n, q)
        else:
            raise cfg.ConfigError("missing required field 'q' (or a 'model' to build the schedule)")
        plan = partition(n, p, q)
        result = plan.to_dict()
        if model is not None:
            cb = corridor_variance_bound(plan, model)
            result["corridor_variance"] = {"bound": cb.bound, "exact": cb.exact,
                                           "ratio_to_total": cb.ratio_to_total}
    return EXIT_OK, result, {}


def cmd_simulate(conf, args, timer):
    sampler = sampler_from_descriptor(conf["sampler"])
    _dims_ok(sampler.dimension)
    seed = conf["seed"]
    box = Box.of_size(conf["n"])
    reps = conf.get("replicates", 1)
    rows, summaries = [], []
    pts = box_points(box)
    with timer.stage("sample"):
        for r in range(reps):
            real = sampler.sample(box, seed, replicate=r)
            v = real.values
            summaries.append({"replicate": r, "sum": math.fsum(v.tolist()),
                              "mean": float(v.mean()), "variance": float(v.var())})
            for p, x in zip(pts.tolist(), v.tolist()):
                rows.append([r, *p, repr(x)])
    header = ["replicate"] + [f"j{k + 1}" for k in range(sampler.dimension)] + ["value"]
    result = {"n": list(box.upper), "seed": seed, "cardinality": box.cardinality,
              "sampler": sampler.descriptor(), "mean": sampler.mean,
              "model_variance": sampler.model([0] * sampler.dimension), "replicates": summaries}
    return EXIT_OK, result, {"realization.csv": (header, rows)}


def _plans_for(sampler, n_max, cert_conf):
    if cert_conf is None:
        return []
    if "q" in cert_conf:
        q = as_index(cert_conf["q"], n_max.dim)
        p = as_index(cert_conf["p"], n_max.dim) if "p" in cert_conf else choose_p(n_max, q)
    else:
        sched = _schedule_for(sampler.model, n_max, cert_conf.get("schedule"))
        q = sched.q_of(n_max)
        p = choose_p(n_max, q)
    return [partition(n_max, p, q)]


def cmd_clt(conf, args, timer):
    sampler = sampler_from_descriptor(conf["sampler"])
    _dims_ok(sampler.dimension)
    n_grid = [as_index(n, sampler.dimension) for n in conf["n_grid"]]
    cert = conf.get("certificate")
    plans = _plans_for(sampler, n_grid[-1], cert)
    thresholds = Thresholds(**conf.get("thresholds", {}))
    report = run_clt(
        sampler, n_grid,
        mode=conf.get("normalization", EXACT),
        replicates=conf["replicates"],
        seed=conf["seed"],
        c_grid=conf.get("c_grid", (2.0, 4.0, 8.0)),
        t_grid=conf.get("t_grid", (0.5, 1.0, 2.0)),
        plans=plans,
        t_cert=(cert or {}).get("t", 1.0),
        eps=(cert or {}).get("eps", 0.1),
        workers=args.threads,
        timer=timer,
    )
    verdict = clt_verdict(report, thresholds)
    result = report.to_dict()
    result["ks_threshold"] = thresholds.ks(report.replicates)
    result["verdict"] = {"status": verdict.status, "text": verdict.text}
    code = {CONSISTENT: EXIT_OK, INCONSISTENT: EXIT_INCONSISTENT}.get(verdict.status, EXIT_INCONCLUSIVE)
    files = {}
    if conf.get("dump_samples"):
        files["clt_samples.csv"] = (["normalized_sum"], [[repr(float(x))] for x in report.normalized_samples])
    return code, result, files


def cmd_certify(conf, args, timer):
    sampler = sampler_from_descriptor(conf["sampler"])
    _dims_ok(sampler.dimension)
    n_grid = [as_index(n, sampler.dimension) for n in conf["n_grid"]]
    fixed = "q" in conf
    sched = None if fixed else _schedule_for(sampler.model, max(n_grid, key=product), conf.get("schedule"))
    rows = []
    with timer.stage("certificate"):
        for n in n_grid:
            if fixed:
                q = as_index(conf["q"], n.dim)
                p = as_index(conf["p"], n.dim) if "p" in conf else choose_p(n, q)
            else:
                q = sched.q_of(n)
                p = choose_p(n, q)
            plan = partition(n, p, q)
            c = q_certificate(sampler, plan, conf.get("t", 1.0), conf.get("eps", 0.1),
                              conf.get("replicates", 1000), conf["seed"], args.threads)
            row = c.to_dict()
            row["corridor_cardinality"] = plan.corridor_cardinality
            row["block_count"] = plan.block_count
            rows.append(row)
    return EXIT_OK, {"rows": rows}, {}


COMMANDS = {
    "variance": cmd_variance,
    "kfun": cmd_kfun,
    "svcheck": cmd_svcheck,
    "blocking": cmd_blocking,
    "simulate": cmd_simulate,
    "clt": cmd_clt,
    "certify": cmd_certify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=int, default=None, metavar="U64",
                        help=f"override the config seed (also via ${SEED_ENV})")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, metavar="N",
                        help="worker threads for Monte Carlo replicates")
    common.add_argument("--out", metavar="DIR", help="write reports (and CSV dumps) here")
    common.add_argument("--profile", action="store_true", help="print wall time per stage")
    parser = argparse.ArgumentParser(
        prog="assoc-clt",
        description="CLT laboratory for positively associated stationary lattice fields",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__)
    return parser


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    timer = StageTimer(args.profile)
    try:
        conf = cfg.load(args.config)
        cfg.validate(args.command, conf)
        conf = copy.deepcopy(conf)
        conf["seed"] = _resolve_seed(args, conf)
        cfg.validate(args.command, conf)
        if args.threads < 1:
            raise cfg.ConfigError("--threads must be >= 1")
    except cfg.ConfigError as exc:
        print(f"assoc-clt: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, result, files = COMMANDS[args.command](conf, args, timer)
    except cfg.ConfigError as exc:
        print(f"assoc-clt: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, RuntimeError, AssertionError) as exc:
        print(f"assoc-clt: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    report = _clean({
        "schema_version": cfg.SCHEMA_VERSION,
        "command": args.command,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": conf,
        "result": result,
        "exit_code": code,
    })
    cfg.validate_report(report)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.json").write_text(text + "\n")
        for name, (header, rows) in files.items():
            _write_csv(out / name, header, rows)
        print(f"wrote {out / (args.command + '.json')}")
    else:
        print(text)
    timer.dump()
    return code


def main() -> None:
    sys.exit(run())
