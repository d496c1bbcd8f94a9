"""Command-line runner: grad-check, train, study, pou-check and bounds.

Exit codes: 0 when every configured check passes, 1 when one fails,
2 for configuration or usage errors, 3 when training hits a non-finite loss
(a partial trace is still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import checks, pou
from .config import ConfigError, RunConfig, reference_table
from .metrics import ErrorReport, complexity_bounds, empirical_rate, mc_h1_error
from .network import NetParams, random_params, save_params
from .optimizer import (NonFiniteError, ProjectionSpec, TrainConfig, TrainTrace, init_params,
                        theoretical_hyperparams, train_guarded)
from .problems import draw_samples

log = logging.getLogger("deepritz")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONFINITE = 0, 1, 2, 3
EVAL_SEED_OFFSET = 7
NEGLIGIBLE_ERROR = 1e-10


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Outputs:
    """Writes artifacts into one directory, honouring output.formats."""

    def __init__(self, directory, formats):
        self.dir = Path(directory)
        self.formats = set(formats)
        self.dir.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> None:
        if Path(name).suffix.lstrip(".") in self.formats:
            (self.dir / name).write_text(content)

    def params(self, name: str, params: NetParams) -> None:
        if "bin" in self.formats:
            save_params(self.dir / name, params)


# ---------------------------------------------------------------------------
# training pipeline shared by train and study

@dataclass
class RunResult:
    params: NetParams
    trace: TrainTrace
    error: Optional[ErrorReport]
    nonfinite: bool = False


def run_training(cfg: RunConfig, sample_seed: int, init_seed: int, eval_seed: int,
                 n: Optional[int] = None) -> RunResult:
    """Draw samples, initialise, train with the guarded step, measure H1 error."""
    t = cfg["train"]
    prob = cfg.problem()
    n = n if n is not None else t["n"]
    m = t["m"] or n
    samples = draw_samples(prob.domain, n, m, sample_seed)
    tcfg = TrainConfig(eta=t["eta"], T=t["T"], A=t["A"], init_bound=t["init_bound"],
                       seed=init_seed, mode=t["mode"])
    p0 = init_params(tcfg, cfg.dims)
    spec = ProjectionSpec(p0, t["inner_radius"], t["outer_budget"])
    try:
        params, trace = train_guarded(p0, prob, samples, tcfg, spec)
    except NonFiniteError as exc:
        return RunResult(exc.params, exc.trace, None, nonfinite=True)
    err = None
    if prob.exact is not None:
        err = mc_h1_error(params, prob.exact, prob.domain, t["n_eval"], eval_seed)
    return RunResult(params, trace, err)


# ---------------------------------------------------------------------------
# subcommands

def cmd_grad_check(cfg: RunConfig, out: Outputs) -> int:
    gc = cfg["grad_check"]
    seed = cfg["train"]["seed"]
    grads = checks.gradient_suite(gc["configs"], seed, gc["tolerance"], gc["corrupt"])
    proj = checks.projection_suite(gc["pairs"], seed)

    rng = np.random.default_rng(seed)
    prob = cfg.problem()
    params = random_params(rng, 4, cfg.dims)
    samples = draw_samples(prob.domain, 64, 64, seed)
    convex = checks.convexity_probe(params, prob, samples, gc["directions"], seed=seed)
    convex_ok = convex >= -1e-10

    passed = grads.passed and proj.passed and convex_ok
    report = {
        "passed": passed,
        "gradients": {"passed": grads.passed, "tolerance": grads.tolerance,
                      "max_relative_error": grads.max_error},
        "projection": {"passed": proj.passed, "idempotence": proj.idempotence,
                       "min_slack": proj.min_slack, "expansion": proj.expansion,
                       "l1_oracle": proj.l1_oracle, "members_unchanged": proj.members_unchanged},
        "convexity": {"passed": convex_ok, "min_second_difference": convex},
    }
    out.text("gradcheck.json", _dumps(report))
    for name, err in sorted(grads.max_error.items()):
        print(f"{name:10s} max rel err {err:.3e}")
    print(f"projection {'PASS' if proj.passed else 'FAIL'}  convexity min {convex:.3e}")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_train(cfg: RunConfig, out: Outputs) -> int:
    seed = cfg["train"]["seed"]
    t0 = time.time()
    res = run_training(cfg, seed + 1, seed, seed + EVAL_SEED_OFFSET)
    log.info("trained in %.1f s", time.time() - t0)
    out.text("trace.csv", res.trace.to_csv())
    out.params("params.bin", res.params)
    if res.nonfinite:
        print(f"non-finite: {res.trace.aborted}", file=sys.stderr)
        return EXIT_NONFINITE
    monotone = res.trace.is_monotone()
    record = {"eta": res.trace.eta, "iterations": len(res.trace) - 1,
              "initial_loss": res.trace.loss[0], "final_loss": res.trace.loss[-1],
              "monotone": monotone, "A": cfg["train"]["A"], "dims": list(cfg.dims)}
    if res.error is not None:
        record.update(json.loads(res.error.to_json()))
        print(f"H1 error {res.error.h1:.5f} +- {res.error.mc_stderr:.1e}")
    out.text("error.json", _dumps(record))
    print(f"loss {res.trace.loss[0]:.6f} -> {res.trace.loss[-1]:.6f}  eta {res.trace.eta:g}  "
          f"monotone {monotone}")
    return EXIT_OK if monotone else EXIT_FAIL


RATE_HEADER = ["n", "rep", "l2", "h1", "stderr", "theory_exponent"]


def cmd_study(cfg: RunConfig, out: Outputs) -> int:
    st = cfg["study"]
    n_list = st["n_list"]
    if len(n_list) < 3:
        raise ConfigError("study.n_list needs at least three sample sizes")
    d = cfg["problem"]["d"]
    theory = -theoretical_hyperparams(max(n_list), d).rate_exp
    seed = cfg["train"]["seed"]
    rows, medians = [], []
    for n in n_list:
        errs = []
        for rep in range(st["repetitions"]):
            run_seed = seed + 1000 * n + rep
            t0 = time.time()
            res = run_training(cfg, run_seed, run_seed + 1, seed + EVAL_SEED_OFFSET, n=n)
            if res.nonfinite:
                print(f"non-finite at n={n} rep={rep}: {res.trace.aborted}", file=sys.stderr)
                return EXIT_NONFINITE
            e = res.error
            log.info("n=%d rep=%d h1=%.5f (%.1f s)", n, rep, e.h1, time.time() - t0)
            rows.append([n, rep, repr(e.l2), repr(e.h1), repr(e.mc_stderr), repr(theory)])
            errs.append(e.h1)
        medians.append(float(np.median(errs)))

    buf = io.StringIO()
    buf.write("# schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATE_HEADER)
    w.writerows(rows)
    out.text("rate.csv", buf.getvalue())

    if max(medians) < NEGLIGIBLE_ERROR:
        slope, trend_ok = "not-applicable", True
    else:
        slope = empirical_rate(zip(n_list, medians))
        trend_ok = slope < 0 and all(b <= a for a, b in zip(medians, medians[1:]))
    summary = {"n": n_list, "median_h1": medians, "slope": slope,
               "theory_exponent": theory, "trend_ok": trend_ok}
    out.text("study.json", _dumps(summary))
    for n, med in zip(n_list, medians):
        print(f"n={n:6d} median H1 {med:.5f}")
    print(f"slope {slope if isinstance(slope, str) else f'{slope:.3f}'}  "
          f"(theory {theory:.5f})  {'PASS' if trend_ok else 'FAIL'}")
    return EXIT_OK if trend_ok else EXIT_FAIL


FIT_HEADER = ["s", "N", "rms_error", "slope"]


def cmd_pou_check(cfg: RunConfig, out: Outputs) -> int:
    p = cfg["pou"]
    seed = cfg["train"]["seed"]
    results = []
    for d in p["d_list"]:
        for N in p["N_list"]:
            for eps in p["eps_list"]:
                pc = pou.PouConfig(N, p["k"], eps)
                results.append(pou.check_pou_bounds(pc, d, p["sample_count"], seed))
    out.text("pou.csv", pou.pou_csv(results))
    bounds_ok = all(c.bound_ok for c in results)
    sum_ok = all(c.max_global_error <= 1e-12 for c in results)

    buf = io.StringIO()
    buf.write("# schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_HEADER)
    slopes_ok = True
    for s in p["fit_s"]:
        errs = pou.fit_errors(pou.fit_test_function, s, p["fit_N_list"])
        slope = pou.error_slope(errs)
        slopes_ok &= abs(slope + s) <= 0.5
        for N, e in errs:
            w.writerow([s, N, repr(e), repr(slope)])
        print(f"s={s} fit slope {slope:.3f}")
    out.text("pou_fits.csv", buf.getvalue())

    for c in results:
        print(f"d={c.d} N={c.N} eps={c.eps:g}  deficit {c.sup_deficit:.2e} <= {c.deficit_bound:.2e}  "
              f"far {c.sup_far:.2e} <= {c.far_bound:.2e}  {'ok' if c.bound_ok else 'VIOLATED'}")
    passed = bounds_ok and sum_ok and slopes_ok
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_bounds(cfg: RunConfig, out: Outputs) -> int:
    n = cfg["bounds"]["n"]
    if n < 2:
        raise ConfigError("bounds.n must be at least 2")
    d, m1, m2 = cfg.dims
    hp = theoretical_hyperparams(n, d)
    B_inn, B_out = float(n) ** hp.B_inn_exp, float(n) ** hp.B_out_exp
    cb = complexity_bounds(m1, m2, d, B_inn, B_out)
    record = {"hyperparams": hp.to_record(), "B_inn": B_inn, "B_out": B_out,
              "widths": {"m1": m1, "m2": m2}, "complexity": cb.to_record()}
    out.text("bounds.json", _dumps(record))
    print(_dumps(record), end="")
    return EXIT_OK


COMMANDS = {
    "grad-check": cmd_grad_check,
    "train": cmd_train,
    "study": cmd_study,
    "pou-check": cmd_pou_check,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deepritz", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="key = value file with [sections]")
        sp.add_argument("--seed", type=int, help="overrides train.seed")
        sp.add_argument("--out", type=Path, help="overrides output.directory")
    sub.add_parser("config-reference", help="print the table of configuration keys")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "config-reference":
        print(reference_table())
        return EXIT_OK
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.defaults()
        if args.seed is not None:
            cfg.set("train", "seed", args.seed)
        if args.out is not None:
            cfg.set("output", "directory", str(args.out))
        cfg.validate()
        out = Outputs(cfg["output"]["directory"], cfg["output"]["formats"])
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        # no monotone step size found
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
