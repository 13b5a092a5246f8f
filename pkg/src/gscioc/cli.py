"""``gscioc`` command-line interface.

Exit codes: 0 success, 2 bad input, 3 numerical failure.  Every command
writes its outputs plus a ``manifest.json`` into ``--out`` (default: the
current directory).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import set_threads
from .core import linearize
from .errors import GSCIOCError, InputError, InsufficientSamples, SolverError
from .inference import MODELS, Demonstration, InferenceConfig, infer
from .iterative import IterationConfig, iterative_gs_cioc, standing_still
from .plotting import plot_batches
from .recursion import PolicySequence, gs_cioc_backward, m_cioc_backward, single_agent_cioc_backward
from .rewards import taylor_expand
from .rollout import RolloutBatch, batch_statistics, mean_rollout, read_batch_csv, sample_rollouts, variance_ratio, write_batch_csv
from .scenarios import ScenarioConfig, resolve_scenario

log = logging.getLogger("gscioc")

SOLVERS = ("gs-cioc", "m-cioc", "iterative", "single-agent")
POLICY_FORMAT = "gscioc-policy"
POLICY_VERSION = 1


@dataclass
class RunManifest:
    command: str
    scenario: str | None
    seed: int | None
    overrides: dict
    output_dir: str
    version: str = __version__
    duration_s: float = 0.0
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


class Run:
    """Bookkeeping for one command: output directory, seed and manifest."""

    def __init__(self, args, scenario_ref=None, seed=None, overrides=None):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(args.command, None if scenario_ref is None else str(scenario_ref), seed, overrides or {}, str(self.out))
        self.t0 = time.perf_counter()

    def write(self, name, text):
        atomic_write(self.out / name, text)
        self.manifest.outputs.append(name)
        return self.out / name

    def finish(self):
        self.manifest.duration_s = round(time.perf_counter() - self.t0, 3)
        atomic_write(self.out / "manifest.json", dump_json(asdict(self.manifest)))


def resolve_seed(flag, fallback=0) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get("GSCIOC_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise InputError(f"GSCIOC_SEED must be an integer, got {env!r}") from None
    return int(fallback)


def parse_floats(text, name):
    try:
        vals = [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise InputError(f"{name} must be a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise InputError(f"{name} is empty")
    return np.array(vals)


def load_config(args) -> ScenarioConfig:
    cfg = resolve_scenario(args.scenario)
    if getattr(args, "theta", None) is not None:
        theta = parse_floats(args.theta, "--theta")
        if theta.shape != cfg.theta.shape:
            raise InputError(f"--theta needs {cfg.theta.size} values, got {theta.size}")
        cfg = cfg.with_theta(theta)
    return cfg


# --------------------------------------------------------------------------- policies


def compute_policies(cfg: ScenarioConfig, solver: str, iter_cfg: IterationConfig | None = None):
    """Return ``(pol_i, pol_j_or_None, info)`` for the requested solver."""
    dyn = cfg.dynamics
    ref = standing_still(dyn, cfg.x0, cfg.T)
    lin = linearize(dyn, ref)
    info = {}
    if solver == "gs-cioc":
        ri, rj = cfg.rewards()
        pi, pj = gs_cioc_backward(taylor_expand(ri, ref), taylor_expand(rj, ref), lin)
        return pi, pj, info
    if solver == "m-cioc":
        return m_cioc_backward(taylor_expand(cfg.shared_reward(), ref), lin), None, info
    if solver == "single-agent":
        ri, rj = cfg.rewards()
        return (
            single_agent_cioc_backward(taylor_expand(ri, ref), lin, "i"),
            single_agent_cioc_backward(taylor_expand(rj, ref), lin, "j"),
            info,
        )
    if solver == "iterative":
        ri, rj = cfg.rewards()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = iterative_gs_cioc(ri, rj, dyn, ref, iter_cfg or IterationConfig())
        info = {
            "iterations": res.iterations,
            "final_delta": res.final_delta,
            "converged": res.converged,
            "warnings": [str(w.message) for w in caught],
            "log": [r.to_dict() for r in res.log],
        }
        return res.policy_i, res.policy_j, info
    raise InputError(f"unknown solver {solver!r}")


def policy_document(cfg, solver, pol_i, pol_j, info) -> dict:
    doc = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "solver": solver,
        "scenario": cfg.name,
        "theta": cfg.theta.tolist(),
        "x0": {"i": cfg.x0.x_i.tolist(), "j": cfg.x0.x_j.tolist()},
    }
    if pol_j is None:
        doc["policies"] = {"joint": pol_i.to_dict()}
    else:
        doc["policies"] = {"i": pol_i.to_dict(), "j": pol_j.to_dict()}
    if info:
        doc["solver_info"] = info
    return doc


def read_policy_document(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"policy file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"policy file is not valid JSON: {exc}") from None
    if doc.get("format") != POLICY_FORMAT or doc.get("version") != POLICY_VERSION:
        raise InputError("not a gscioc policy file (format/version mismatch)")
    pols = doc.get("policies", {})
    if "joint" in pols:
        return PolicySequence.from_dict(pols["joint"]), None
    if "i" in pols and "j" in pols:
        return PolicySequence.from_dict(pols["i"]), PolicySequence.from_dict(pols["j"])
    raise InputError("policy file holds neither a joint nor a per-agent policy pair")


def iteration_config(args) -> IterationConfig:
    return IterationConfig(eta=args.eta, max_iterations=args.max_iterations)


# --------------------------------------------------------------------------- commands


def cmd_solve(args):
    cfg = load_config(args)
    run = Run(args, args.scenario, None, {"solver": args.solver, "theta": cfg.theta.tolist()})
    pi, pj, info = compute_policies(cfg, args.solver, iteration_config(args))
    run.write("policy.json", dump_json(policy_document(cfg, args.solver, pi, pj, info)))
    if info:
        run.manifest.extra = {k: v for k, v in info.items() if k != "log"}
    run.finish()
    return 0


def _stats_document(batch: RolloutBatch) -> dict:
    try:
        return batch_statistics(batch).to_dict()
    except InsufficientSamples as exc:
        return {"n": batch.n, "note": f"statistics omitted: {exc}"}


def cmd_rollout(args):
    cfg = load_config(args)
    seed = resolve_seed(args.seed, cfg.seed)
    n = cfg.n_rollouts if args.n is None else args.n
    if n < 1:
        raise InsufficientSamples("--n must be at least 1")
    run = Run(args, args.scenario, seed, {"solver": args.solver, "n": n, "policy": args.policy, "theta": cfg.theta.tolist()})
    if args.policy:
        pi, pj = read_policy_document(args.policy)
        label = f"policy:{Path(args.policy).name}"
    else:
        pi, pj, info = compute_policies(cfg, args.solver, iteration_config(args))
        label = args.solver.upper()
        if info:
            run.manifest.extra = {k: v for k, v in info.items() if k != "log"}
    batch = sample_rollouts(pi, pj, cfg.dynamics, cfg.x0, n, seed, provenance=label)
    run.write("rollouts.csv", write_batch_csv(batch))
    run.write("stats.json", dump_json(_stats_document(batch)))
    run.finish()
    return 0


def cmd_infer(args):
    cfg = resolve_scenario(args.scenario)
    batch = read_batch_csv(args.demonstrations)
    theta0 = parse_floats(args.theta0, "--theta0") if args.theta0 is not None else np.ones_like(cfg.theta)
    if theta0.shape != cfg.theta.shape:
        raise InputError(f"--theta0 needs {cfg.theta.size} values, got {theta0.size}")
    overrides = {"theta0": theta0.tolist(), "model": args.model, "learning_rate": args.lr, "max_iterations": args.max_iterations}
    run = Run(args, args.scenario, batch.seed, overrides)
    run.manifest.extra["demonstrations"] = str(args.demonstrations)
    demo = Demonstration(batch.trajectories, cfg)
    res = infer(demo, InferenceConfig(theta0=theta0, learning_rate=args.lr, max_iterations=args.max_iterations, model=args.model))
    doc = {
        "theta": res.theta.tolist(),
        "theta_names": list(cfg.theta_names),
        "objective": res.objective,
        "iterations": res.iterations,
        "stop_reason": res.stop_reason,
        "seed": batch.seed,
        "model": args.model,
        "n_demonstrations": batch.n,
    }
    run.write("theta.json", dump_json(doc))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective", "step"] + [f"theta{k}" for k in range(res.theta.size)])
    for it, f, th, step in res.trace:
        w.writerow([it, repr(float(f)), repr(float(step))] + [repr(float(v)) for v in th])
    run.write("trace.csv", buf.getvalue())
    run.manifest.extra.update({"iterations": res.iterations, "stop_reason": res.stop_reason})
    run.finish()
    return 0


def grid_from_args(args, cfg):
    from .softvi import GridSpec

    if args.grid:
        try:
            d = json.loads(Path(args.grid).read_text())
            return GridSpec(d["state_i"], d["state_j"], d["action_i"], d["action_j"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"bad grid file {args.grid}: {exc}") from None
    for name in ("state_bins", "action_bins"):
        if getattr(args, name) < 2:
            raise InputError(f"--{name.replace('_', '-')} must be at least 2")
    if args.half_width is not None and not args.half_width > 0:
        raise InputError("--half-width must be positive")
    return GridSpec.default_for(cfg.dims, cfg.x0, args.state_bins, args.action_bins, args.half_width)


def comparison_csv(batches, labels) -> str:
    """Mean/std of every state and action component per agent on a shared time axis."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["quantity", "agent", "component", "t"]
    for lab in labels:
        header += [f"{lab}_mean", f"{lab}_std"]
    w.writerow(header)
    for quantity in ("state", "action"):
        for agent in ("i", "j"):
            arrs = [getattr(b.trajectories, f"{quantity}s_{agent}") for b in batches]
            t0 = 0 if quantity == "state" else 1
            for c in range(arrs[0].shape[-1]):
                for k in range(arrs[0].shape[1]):
                    row = [quantity, agent, c, k + t0]
                    for a in arrs:
                        x = a[:, k, c]
                        row += [repr(float(x.mean())), repr(float(x.std(ddof=1)) if x.size > 1 else 0.0)]
                    w.writerow(row)
    return buf.getvalue()


def cmd_baseline_vi(args):
    from .softvi import soft_vi_solve, tabular_rollout, write_policy_csv

    cfg = load_config(args)
    seed = resolve_seed(args.seed, cfg.seed)
    n = cfg.n_rollouts if args.n is None else args.n
    if n < 2:
        raise InsufficientSamples("--n must be at least 2 for the comparison")
    grid = grid_from_args(args, cfg)
    run = Run(args, args.scenario, seed, {"grid": grid.to_dict(), "n": n, "sweep_tol": args.sweep_tol, "max_sweeps": args.max_sweeps})
    ri, rj = cfg.rewards()
    res = soft_vi_solve(ri, rj, cfg.dynamics, grid, cfg.T, args.sweep_tol, args.max_sweeps)
    vi = tabular_rollout(res, cfg.dynamics, cfg.x0, n, seed)
    pi, pj, info = compute_policies(cfg, "iterative", iteration_config(args))
    gs = sample_rollouts(pi, pj, cfg.dynamics, cfg.x0, n, seed, provenance="iterative GS-CIOC")
    run.write("grid.json", dump_json(grid.to_dict()))
    run.write("vi_policy.csv", write_policy_csv(res, stride=args.dump_stride))
    run.write("vi_rollouts.csv", write_batch_csv(vi))
    run.write("gs_rollouts.csv", write_batch_csv(gs))
    run.write("comparison.csv", comparison_csv([gs, vi], ["gs", "vi"]))
    run.manifest.extra = {"sweeps": res.sweeps, "final_change": res.change, "iterative": {k: v for k, v in info.items() if k != "log"}}
    run.finish()
    return 0


def cmd_stats(args):
    batch = read_batch_csv(args.batch)
    doc = {"batch": str(args.batch), "seed": batch.seed, "provenance": batch.provenance}
    doc.update(_stats_document(batch))
    if args.reference:
        other = read_batch_csv(args.reference)
        doc["variance_ratio"] = variance_ratio(batch_statistics(batch), batch_statistics(other))
        doc["reference"] = str(args.reference)
    text = dump_json(doc)
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot(args):
    if not args.batches:
        raise InputError("no roll-out CSV given")
    batches = [read_batch_csv(p) for p in args.batches]
    labels = args.labels.split(",") if args.labels else [b.provenance for b in batches]
    if len(labels) != len(batches):
        raise InputError("--labels needs one label per batch")
    svg = plot_batches(batches, labels, args.quantity, args.component, args.title or "")
    atomic_write(args.output, svg)
    return 0


def cmd_reproduce(args):
    from . import experiments

    seed = resolve_seed(args.seed, 0)
    run = Run(args, None, seed, {"quick": args.quick, "skip_inference": args.skip_inference})
    summary = experiments.reproduce(run, seed, quick=args.quick, skip_inference=args.skip_inference)
    run.write("summary.json", dump_json(summary))
    run.finish()
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gscioc", description="Two-agent general-sum continuous inverse optimal control.")
    p.add_argument("--version", action="version", version=f"gscioc {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=None, help="cap on numba worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("scenario", help="built-in scenario name or scenario JSON path")
        sp.add_argument("--out", default=".", help="output directory")
        return sp

    def solver_flags(sp):
        sp.add_argument("--solver", choices=SOLVERS, default="gs-cioc")
        sp.add_argument("--theta", help="override the scenario's reward parameters")
        sp.add_argument("--eta", type=float, default=0.5, help="step scale of the iterative solver")
        sp.add_argument("--max-iterations", type=int, default=100, help="iterative solver budget")

    sp = common(sub.add_parser("solve", help="compute stage policies"))
    solver_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = common(sub.add_parser("rollout", help="sample roll-outs and statistics"))
    solver_flags(sp)
    sp.add_argument("--policy", help="policy JSON from 'solve' (overrides --solver)")
    sp.add_argument("-n", type=int, default=None, help="number of roll-outs")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_rollout)

    sp = sub.add_parser("infer", help="infer reward parameters from a roll-out CSV")
    sp.add_argument("demonstrations")
    common(sp)
    sp.add_argument("--model", choices=MODELS, default="gs-cioc")
    sp.add_argument("--theta0", help="initial parameters (default: all ones)")
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--max-iterations", type=int, default=50000)
    sp.set_defaults(func=cmd_infer)

    sp = common(sub.add_parser("baseline-vi", help="discretized soft value iteration vs iterative GS-CIOC"))
    sp.add_argument("--theta", help="override the scenario's reward parameters")
    sp.add_argument("--grid", help="grid JSON (state_i/state_j/action_i/action_j axes as [lo, hi, bins])")
    sp.add_argument("--state-bins", type=int, default=121)
    sp.add_argument("--action-bins", type=int, default=41)
    sp.add_argument("--half-width", type=float, default=None)
    sp.add_argument("--sweep-tol", type=float, default=1e-6)
    sp.add_argument("--max-sweeps", type=int, default=200)
    sp.add_argument("--dump-stride", type=int, default=1, help="thin the policy dump to every k-th grid point")
    sp.add_argument("--eta", type=float, default=0.5)
    sp.add_argument("--max-iterations", type=int, default=300)
    sp.add_argument("-n", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_baseline_vi)

    sp = sub.add_parser("stats", help="statistics of a roll-out CSV")
    sp.add_argument("batch")
    sp.add_argument("--reference", help="second batch; adds the variance ratio batch/reference")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("plot", help="SVG of mean curves with one-sigma bands")
    sp.add_argument("batches", nargs="*")
    sp.add_argument("-o", "--output", default="plot.svg")
    sp.add_argument("--labels")
    sp.add_argument("--quantity", choices=("actions", "states"), default="actions")
    sp.add_argument("--component", type=int, default=0)
    sp.add_argument("--title")
    sp.set_defaults(func=cmd_plot)

    sp = common(sub.add_parser("reproduce", help="run the full experiment pipeline"), scenario=False)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--quick", action="store_true", help="fewer roll-outs and iterations")
    sp.add_argument("--skip-inference", action="store_true")
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        set_threads(args.threads)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except GSCIOCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
