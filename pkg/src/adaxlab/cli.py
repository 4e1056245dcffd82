"""Command-line front end for the experiment families.

Subcommands
-----------
``synthetic``
    One optimizer on a 1-D benchmark (the decaying-cost problem or the
    alternating-cost problem); writes a per-step trace
    ``t,x,grad,delta,vhat_avg,gamma_min``.
``regret``
    Cumulative and average regret of one optimizer on the alternating-cost
    problem; writes ``t,x,cumulative_regret,avg_regret``.
``train``
    Mini-batch MLP training on blob data (generated or loaded from CSV);
    writes a per-iteration trace ``iter,epoch,loss,train_acc,test_acc,
    vhat_avg`` where the accuracy columns hold the end-of-epoch evaluation
    of the row's epoch.
``diag``
    Closed-form reference values against fresh simulations; writes
    ``name,closed_form,simulated,rel_err``.

Every CSV begins with ``# key = value`` comment lines echoing the full
effective configuration, followed by a fixed header row.  Repeating an
invocation with the same arguments produces a byte-identical file.

``--seed`` and ``--opt`` accept comma-separated lists; the cross product
of the two runs once per combination, each run writing its own file tagged
``-<opt>-s<seed>`` before the extension.  ``--jobs N`` executes the runs
in up to N processes; files and messages keep the configuration order.

A plain-text config file (``--config``, ``key = value`` lines, ``#``
comments) supplies defaults for any flag of the chosen subcommand; flags
given on the command line win.  Unknown keys are rejected.

Exit status: 0 success, 1 runtime failure (numeric blow-up, unwritable
output), 2 usage error.  On failure no partial output file is left
behind.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .nn import Dataset, make_blobs, train
from .optim import KINDS, NumericsError, OptimizerConfig
from .oracle import (
    adam_vt_closed,
    adax_vhat_closed,
    amsgrad_tmax,
    diagnostics,
    mc_bias_check,
)
from .problems import DecayProblem, ReddiProblem, regret_series, run

# Aliases resolving to (kind, decay_mode); an explicit --decay-mode wins.
OPT_ALIASES = {"adamw": ("adam", "decoupled"), "adaxw": ("adax", "decoupled")}

HEADERS = {
    "synthetic": ["t", "x", "grad", "delta", "vhat_avg", "gamma_min"],
    "regret": ["t", "x", "cumulative_regret", "avg_regret"],
    "train": ["iter", "epoch", "loss", "train_acc", "test_acc", "vhat_avg"],
    "diag": ["name", "closed_form", "simulated", "rel_err"],
}

# Rows kept without --every once a trace exceeds this many steps.
MAX_DEFAULT_ROWS = 100_000


class UsageError(Exception):
    """Bad flags, config keys, or parameter ranges (exit status 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # raise instead of sys.exit so main() owns codes
        raise UsageError(message)


@dataclass
class RunConfig:
    """One fully resolved run: subcommand, optimizer, parameters, output."""

    subcommand: str
    out: Path
    seed: int
    label: str = ""                      # optimizer token as given (may be alias)
    optimizer: Optional[OptimizerConfig] = None
    every: Optional[int] = None          # None: auto (all rows up to the cap)
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# argument parsing


def _add_optimizer_flags(sub, default_opt: str):
    sub.add_argument("--opt", type=str, help=f"optimizer kind(s), comma-separated; aliases adamw/adaxw select decoupled decay (default {default_opt})")
    sub.add_argument("--alpha", type=float, help="step size (default: per-kind)")
    sub.add_argument("--beta1", type=float, help="first-moment coefficient")
    sub.add_argument("--beta2", type=float, help="second-moment coefficient")
    sub.add_argument("--eps", type=float, help="denominator offset")
    sub.add_argument("--wd", type=float, help="weight-decay coefficient")
    sub.add_argument("--decay-mode", choices=("none", "l2", "decoupled"), help="how weight decay enters the update")
    sub.add_argument("--power-p", type=float, help="denominator exponent for the partially adaptive kinds")
    sub.add_argument("--schedule", choices=("constant", "invsqrt"), help="step-size schedule")
    sub.add_argument("--beta1-schedule", choices=("constant", "geometric"), help="first-moment coefficient schedule")
    sub.add_argument("--beta1-decay", type=float, help="ratio for the geometric beta1 schedule")
    sub.add_argument("--beta2-schedule", choices=("constant", "invtime"), help="second-moment coefficient schedule")


def _add_common_flags(sub, default_out: str):
    sub.add_argument("--seed", type=str, help="seed(s), comma-separated (default 0)")
    sub.add_argument("--every", type=int, help="record every Nth row (default: every row while at most 100000 rows)")
    sub.add_argument("--out", type=str, help=f"output CSV path (default {default_out})")
    sub.add_argument("--config", type=str, help="plain-text 'key = value' defaults for this subcommand")
    sub.add_argument("--jobs", type=int, help="run up to N configurations in parallel (default 1)")


def build_parser() -> _Parser:
    parser = _Parser(prog="adaxlab", description=__doc__.split("\n\n")[0])
    subs = parser.add_subparsers(dest="subcommand", required=True)

    syn = subs.add_parser("synthetic", help="per-step trace of one optimizer on a 1-D benchmark")
    _add_optimizer_flags(syn, "adax")
    syn.add_argument("--problem", choices=("decay", "reddi"), help="benchmark problem (default decay)")
    syn.add_argument("--C", type=float, help="cost scale (default: 0.001 decay, 3.0 reddi)")
    syn.add_argument("--lam", type=float, help="decay ratio of the decaying-cost problem (default 0.9999)")
    syn.add_argument("--absorb-after", type=int, help="step after which the decay cost flattens for x <= 0 (default 1)")
    syn.add_argument("--x0", type=float, help="starting point (default 1.0)")
    syn.add_argument("--T", type=int, help="number of steps (default 100000)")
    _add_common_flags(syn, "synthetic.csv")

    reg = subs.add_parser("regret", help="cumulative regret on the alternating-cost problem")
    _add_optimizer_flags(reg, "adax")
    reg.add_argument("--C", type=float, help="large-slope magnitude (default 3.0)")
    reg.add_argument("--x0", type=float, help="starting point in [-1, 1] (default 1.0)")
    reg.add_argument("--T", type=int, help="number of steps (default 30000)")
    _add_common_flags(reg, "regret.csv")

    tr = subs.add_parser("train", help="mini-batch MLP training on blob data")
    _add_optimizer_flags(tr, "adax")
    tr.add_argument("--data", type=str, help="dataset CSV (f0..fD,label); replaces the generated blobs")
    tr.add_argument("--n", type=int, help="generated dataset size (default 3000)")
    tr.add_argument("--d", type=int, help="feature dimension (default 20)")
    tr.add_argument("--k", type=int, help="class count (default 3)")
    tr.add_argument("--spread", type=float, help="within-class noise scale (default 1.0)")
    tr.add_argument("--epochs", type=int, help="training epochs (default 30)")
    tr.add_argument("--batch-size", type=int, help="mini-batch size (default 16)")
    tr.add_argument("--hidden", type=int, help="hidden width (default 32)")
    _add_common_flags(tr, "train.csv")

    dg = subs.add_parser("diag", help="closed-form values vs fresh simulations")
    dg.add_argument("--beta2", type=float, help="EMA second-moment coefficient (default 0.999)")
    dg.add_argument("--beta2-long", type=float, help="long-memory second-moment coefficient (default 0.0001)")
    dg.add_argument("--lam", type=float, help="gradient decay ratio (default 0.9999)")
    dg.add_argument("--C", type=float, help="gradient scale (default 0.001)")
    dg.add_argument("--T", type=int, help="simulation length, at most 1000000 (default 10000)")
    dg.add_argument("--trials", type=int, help="Monte-Carlo trials (default 10000)")
    dg.add_argument("--seed", type=str, help="Monte-Carlo seed (default 0)")
    dg.add_argument("--every", type=int, help=argparse.SUPPRESS)
    dg.add_argument("--out", type=str, help="output CSV path (default diag.csv)")
    dg.add_argument("--config", type=str, help="plain-text 'key = value' defaults for this subcommand")
    dg.add_argument("--jobs", type=int, help=argparse.SUPPRESS)

    for sub in (syn, reg, tr, dg):
        for action in sub._get_optional_actions():
            if action.dest != "help":
                action.default = argparse.SUPPRESS
    return parser


_DEFAULTS = {
    "synthetic": dict(opt="adax", problem="decay", C=None, lam=0.9999,
                      absorb_after=1, x0=1.0, T=100_000, seed="0", every=None,
                      out="synthetic.csv", jobs=1),
    "regret": dict(opt="adax", C=3.0, x0=1.0, T=30_000, seed="0", every=None,
                   out="regret.csv", jobs=1),
    "train": dict(opt="adax", data=None, n=3000, d=20, k=3, spread=1.0,
                  epochs=30, batch_size=16, hidden=32, seed="0", every=None,
                  out="train.csv", jobs=1),
    "diag": dict(beta2=0.999, beta2_long=1e-4, lam=0.9999, C=1e-3, T=10_000,
                 trials=10_000, seed="0", every=None, out="diag.csv", jobs=1),
}
_OPTIMIZER_DESTS = ("alpha", "beta1", "beta2", "eps", "wd", "decay_mode",
                    "power_p", "schedule", "beta1_schedule", "beta1_decay",
                    "beta2_schedule")


def _read_config_file(path: str, sub) -> dict:
    """Parse 'key = value' lines, typed and validated against the subcommand."""
    actions = {a.dest: a for a in sub._get_optional_actions()
               if a.dest not in ("help", "config")}
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        if key not in actions:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} for this subcommand")
        action = actions[key]
        convert = action.type or str
        try:
            typed = convert(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        if action.choices is not None and typed not in action.choices:
            raise UsageError(
                f"{path}:{lineno}: {key} must be one of {tuple(action.choices)}, got {typed!r}")
        out[key] = typed
    return out


def _parse_int_list(text: str, name: str) -> list[int]:
    try:
        values = [int(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad {name} list {text!r}: {exc}") from exc
    if not values:
        raise UsageError(f"empty {name} list {text!r}")
    return values


def _optimizer_from(merged: dict, label: str) -> OptimizerConfig:
    label = label.lower()
    kind, forced_mode = label, None
    if label in OPT_ALIASES:
        kind, forced_mode = OPT_ALIASES[label]
    if kind not in KINDS:
        raise UsageError(
            f"unknown optimizer {label!r}; expected one of {KINDS + tuple(OPT_ALIASES)}")
    rename = {"eps": "epsilon", "wd": "weight_decay", "schedule": "step_schedule"}
    kwargs = {}
    for dest in _OPTIMIZER_DESTS:
        value = merged.get(dest)
        if dest == "decay_mode" and value is None:
            value = forced_mode
        if value is not None:
            kwargs[rename.get(dest, dest)] = value
    return OptimizerConfig(kind=kind, **kwargs)


def parse_args(argv) -> tuple[list[RunConfig], int]:
    """Resolve argv (+ optional config file) into runs and a job count."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    sub_name = ns.pop("subcommand")
    sub = parser._subparsers._group_actions[0].choices[sub_name]
    merged = dict(_DEFAULTS[sub_name])
    if "config" in ns:
        merged.update(_read_config_file(ns.pop("config"), sub))
    merged.update(ns)

    jobs = int(merged.pop("jobs") or 1)
    if jobs < 1:
        raise UsageError(f"jobs must be >= 1, got {jobs}")
    every = merged.pop("every")
    if every is not None and every < 1:
        raise UsageError(f"every must be >= 1, got {every}")
    out = Path(merged.pop("out"))
    seeds = _parse_int_list(merged.pop("seed"), "seed")

    if sub_name == "diag":
        _check_ranges(sub_name, merged)
        runs = [RunConfig(subcommand=sub_name, out=out, seed=seeds[0],
                          every=every, extras=dict(merged))]
        return runs, jobs

    opts = [tok.strip().lower() for tok in str(merged.pop("opt")).split(",")
            if tok.strip() != ""]
    if not opts:
        raise UsageError("empty optimizer list")
    _check_ranges(sub_name, merged)
    runs = []
    multi = len(opts) * len(seeds) > 1
    for label in opts:
        optimizer = _optimizer_from(merged, label)
        for seed in seeds:
            path = out
            if multi:
                path = out.with_name(f"{out.stem}-{label}-s{seed}{out.suffix}")
            extras = {k: v for k, v in merged.items()
                      if k not in _OPTIMIZER_DESTS}
            runs.append(RunConfig(subcommand=sub_name, out=path, seed=seed,
                                  label=label, optimizer=optimizer,
                                  every=every, extras=extras))
    return runs, jobs


def _check_ranges(sub_name: str, merged: dict) -> None:
    def need(cond, message):
        if not cond:
            raise UsageError(message)

    if sub_name in ("synthetic", "regret"):
        need(merged["T"] >= 0, f"T must be >= 0, got {merged['T']}")
        need(merged["C"] is None or merged["C"] > 0,
             f"C must be > 0, got {merged['C']}")
    if sub_name == "synthetic":
        need(0.0 < merged["lam"] <= 1.0,
             f"lam must be in (0, 1], got {merged['lam']}")
        need(merged["absorb_after"] >= 0,
             f"absorb-after must be >= 0, got {merged['absorb_after']}")
    if sub_name == "train":
        explicit_gen = [k for k in ("n", "d", "k", "spread")
                        if merged.get(k) != _DEFAULTS["train"][k]]
        need(not (merged.get("data") and explicit_gen),
             f"--data replaces the generated blobs; drop --{explicit_gen[0] if explicit_gen else ''}")
        need(merged["epochs"] >= 0, f"epochs must be >= 0, got {merged['epochs']}")
        need(merged["batch_size"] >= 1,
             f"batch-size must be >= 1, got {merged['batch_size']}")
        need(merged["hidden"] >= 1, f"hidden must be >= 1, got {merged['hidden']}")
    if sub_name == "diag":
        need(1 <= merged["T"] <= 1_000_000,
             f"T must be in [1, 1000000], got {merged['T']}")
        need(merged["trials"] >= 100,
             f"trials must be >= 100, got {merged['trials']}")
        need(0.0 < merged["lam"] < 1.0,
             f"lam must be in (0, 1), got {merged['lam']}")
        need(0.0 < merged["beta2"] < 1.0,
             f"beta2 must be in (0, 1), got {merged['beta2']}")
        need(merged["beta2_long"] > 0,
             f"beta2-long must be > 0, got {merged['beta2_long']}")


# ---------------------------------------------------------------------------
# execution


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, echo: list[tuple[str, object]], header: list[str],
               rows) -> None:
    """Write comment echo + header + rows atomically (tmp file then rename)."""
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as fh:
            for key, value in echo:
                fh.write(f"# {key} = {_fmt(value)}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _stride_indices(n: int, every: int) -> list[int]:
    """Indices 0, every, 2*every, ... plus the final index."""
    if n == 0:
        return []
    idx = list(range(0, n, every))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return idx


def _auto_every(total: int) -> int:
    return max(1, total // MAX_DEFAULT_ROWS)


def _optimizer_echo(rc: RunConfig) -> list[tuple[str, object]]:
    cfg = rc.optimizer
    return [
        ("subcommand", rc.subcommand), ("opt", rc.label), ("kind", cfg.kind),
        ("alpha", cfg.alpha), ("beta1", cfg.beta1), ("beta2", cfg.beta2),
        ("epsilon", cfg.epsilon), ("power_p", cfg.power_p),
        ("weight_decay", cfg.weight_decay), ("decay_mode", cfg.decay_mode),
        ("step_schedule", cfg.step_schedule),
        ("beta1_schedule", cfg.beta1_schedule),
        ("beta1_decay", cfg.beta1_decay),
        ("beta2_schedule", cfg.beta2_schedule),
    ]


def _run_synthetic(rc: RunConfig) -> int:
    p = rc.extras
    T = p["T"]
    every = rc.every or _auto_every(T)
    C = p["C"]
    if p["problem"] == "decay":
        problem = DecayProblem(C=1e-3 if C is None else C, lam=p["lam"],
                               n=p["absorb_after"])
        prob_echo = [("problem", "decay"), ("C", problem.C),
                     ("lam", problem.lam), ("absorb_after", problem.n)]
    else:
        problem = ReddiProblem(C=3.0 if C is None else C)
        prob_echo = [("problem", "reddi"), ("C", problem.C)]
    traj = run(problem, rc.optimizer, x0=np.array([p["x0"]]), T=T,
               record_every=every)
    records = diagnostics(traj)
    rows = [
        (int(t), float(x), float(g), float(d), r.vhat_avg, r.gamma_min)
        for t, x, g, d, r in zip(traj.ts, traj.iterates, traj.gradients,
                                 traj.deltas, records)
    ]
    echo = _optimizer_echo(rc) + prob_echo + [
        ("x0", p["x0"]), ("T", T), ("seed", rc.seed), ("every", every)]
    _write_csv(rc.out, echo, HEADERS["synthetic"], rows)
    return len(rows)


def _run_regret(rc: RunConfig) -> int:
    p = rc.extras
    T = p["T"]
    problem = ReddiProblem(C=p["C"])
    traj = run(problem, rc.optimizer, x0=np.array([p["x0"]]), T=T,
               record_every=1)
    series = regret_series(traj, problem)
    every = rc.every or _auto_every(len(series))
    rows = []
    for i in _stride_indices(len(series), every):
        t = int(traj.ts[i])
        rows.append((t, float(traj.iterates[i]), float(series[i]),
                     float(series[i]) / t))
    echo = _optimizer_echo(rc) + [
        ("problem", "reddi"), ("C", problem.C), ("x0", p["x0"]), ("T", T),
        ("seed", rc.seed), ("every", every)]
    _write_csv(rc.out, echo, HEADERS["regret"], rows)
    return len(rows)


def _run_train(rc: RunConfig) -> int:
    p = rc.extras
    if p.get("data"):
        dataset = Dataset.from_csv(p["data"])
        data_echo = [("data", p["data"]), ("n", dataset.n), ("d", dataset.d),
                     ("k", dataset.k)]
    else:
        dataset = make_blobs(seed=rc.seed, n=p["n"], d=p["d"], k=p["k"],
                             spread=p["spread"])
        data_echo = [("n", dataset.n), ("d", dataset.d), ("k", dataset.k),
                     ("spread", p["spread"])]
    report = train(rc.optimizer, dataset, epochs=p["epochs"],
                   batch_size=p["batch_size"], seed=rc.seed,
                   hidden=p["hidden"])
    if report.diverged_at is not None:
        raise NumericsError(
            f"training diverged at iteration {report.diverged_at}")
    every = rc.every or _auto_every(report.iterations)
    rows = []
    for i in _stride_indices(report.iterations, every):
        epoch = int(report.batch_epoch[i])
        rows.append((i + 1, epoch, float(report.batch_loss[i]),
                     float(report.epoch_train_acc[epoch]),
                     float(report.epoch_test_acc[epoch]),
                     float(report.vhat_avg[i])))
    echo = _optimizer_echo(rc) + data_echo + [
        ("epochs", p["epochs"]), ("batch_size", p["batch_size"]),
        ("hidden", p["hidden"]), ("seed", rc.seed), ("every", every)]
    _write_csv(rc.out, echo, HEADERS["train"], rows)
    return len(rows)


def _run_diag(rc: RunConfig) -> int:
    p = rc.extras
    T, C, lam = p["T"], p["C"], p["lam"]
    beta2, beta2_long = p["beta2"], p["beta2_long"]
    # A step size this small cannot move the iterate off the positive side
    # within T steps, so the gradient stream stays exactly C*lam^(t-1).
    alpha = 1.0 / (100.0 * T)
    problem = DecayProblem(C=C, lam=lam, n=1)
    ema = run(problem, OptimizerConfig(kind="adam", alpha=alpha, beta1=0.0,
                                       beta2=beta2, epsilon=0.0),
              x0=np.array([1.0]), T=T, record_every=1)
    longmem = run(problem, OptimizerConfig(kind="adax", alpha=alpha, beta1=0.0,
                                           beta2=beta2_long, epsilon=0.0),
                  x0=np.array([1.0]), T=T, record_every=1)
    mean, _stderr = mc_bias_check(t=100, beta2=beta2_long, trials=p["trials"],
                                  seed=rc.seed)

    def rel(closed: float, simulated: float) -> float:
        return abs(closed - simulated) / max(abs(closed), abs(simulated),
                                             1e-300)

    vt_closed = adam_vt_closed(T, C, lam, beta2)
    vt_sim = float(ema.vs[-1])
    vhat_closed = adax_vhat_closed(T, C, lam, beta2_long)
    vhat_sim = float(longmem.vhats[-1])
    tmax_closed = amsgrad_tmax(beta2, lam)
    tmax_sim = int(ema.ts[int(np.argmax(ema.vs))])
    rows = [
        ("adam_vt", vt_closed, vt_sim, rel(vt_closed, vt_sim)),
        ("adax_vhat", vhat_closed, vhat_sim, rel(vhat_closed, vhat_sim)),
        ("amsgrad_tmax", tmax_closed, tmax_sim, rel(tmax_closed, tmax_sim)),
        ("mc_bias", 1.0, mean, rel(1.0, mean)),
    ]
    echo = [("subcommand", "diag"), ("beta2", beta2),
            ("beta2_long", beta2_long), ("lam", lam), ("C", C), ("T", T),
            ("trials", p["trials"]), ("seed", rc.seed)]
    _write_csv(rc.out, echo, HEADERS["diag"], rows)
    return len(rows)


_RUNNERS = {"synthetic": _run_synthetic, "regret": _run_regret,
            "train": _run_train, "diag": _run_diag}


def execute_run(rc: RunConfig) -> tuple[Path, int]:
    return rc.out, _RUNNERS[rc.subcommand](rc)


def main(argv=None) -> int:
    try:
        runs, jobs = parse_args(sys.argv[1:] if argv is None else argv)
        if jobs == 1 or len(runs) == 1:
            results = [execute_run(rc) for rc in runs]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(execute_run, rc) for rc in runs]
                results = [f.result() for f in futures]
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path, nrows in results:
        print(f"wrote {path} ({nrows} rows)")
    return 0
