"""Command-line interface: ``scsim {generate,validate,decompose,table1}``.

Exit codes: 0 success, 1 validation failure, 2 malformed input,
3 optimizer finished above tolerance.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import decompose as dec
from . import io
from .channels import (
    ChoiState,
    KrausChannel,
    choi_from_kraus,
    is_extreme,
    is_gen_extreme,
    is_unital,
    kraus_from_choi,
    nonunitality_witnesses,
    random_channel,
)
from .linalg import is_unitary, max_abs
from .superchannels import (
    CLASSES,
    Superchannel,
    SuperChoi,
    comb_validity,
    kraus_from_super_choi,
    super_choi,
    super_extreme_necessary,
    unital_class_check,
    random_superchannel,
)

EXIT_OK, EXIT_INVALID, EXIT_MALFORMED, EXIT_ABOVE_TOL = 0, 1, 2, 3

log = logging.getLogger("scsim")


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        io.write_atomic(out, text)
    else:
        sys.stdout.write(text)


# --- generate ---------------------------------------------------------------


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.kind == "channel":
        if args.klass is not None:
            raise UsageError("channels take no class argument; use --d and --rank")
        obj = random_channel(args.d, args.rank, rng)
        summary = f"channel d={args.d}, rank {choi_from_kraus(obj).rank()}, CPTP {'ok' if obj.is_cptp() else 'FAILED'}"
    else:
        klass = args.klass or "full"
        if klass not in CLASSES:
            raise UsageError(f"unknown superchannel class {klass!r}; choose from {', '.join(CLASSES)}")
        if args.d != 2:
            raise UsageError("random superchannels are generated for d=2 only")
        obj = random_superchannel(klass, rng)
        r = super_choi(obj)
        summary = (
            f"superchannel {klass}: V {obj.V.shape[0]}x{obj.V.shape[1]}, W {obj.W.shape[0]}x{obj.W.shape[1]}, "
            f"rank {r.rank()}, comb {'ok' if comb_validity(r) else 'FAILED'}"
        )
    _emit(io.dumps(obj), args.out)
    print(summary, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# --- validate ---------------------------------------------------------------


def _fmt_matrix(m: np.ndarray) -> str:
    return np.array2string(np.round(m, 6), precision=6, suppress_small=True).replace("\n", "\n    ")


def _validate_channel(ch: KrausChannel) -> tuple[bool, list[str], dict]:
    res = ch.completeness_residual()
    ok = ch.is_cptp()
    rank = choi_from_kraus(ch).rank()
    info = {"kind": "channel", "cptp": ok, "completeness_residual": res, "rank": rank}
    lines = [f"CPTP {'ok' if ok else 'FAILED'} (completeness residual {res:.3e})", f"rank {rank}"]
    if not ok:
        return False, lines, info
    ext = is_extreme(ch)
    gen = is_gen_extreme(ch)
    lines.append("extreme" if ext else ("quasi-extreme" if gen else "not gen-extreme"))
    info.update(extreme=ext, gen_extreme=gen)
    if ch.d_in == ch.d_out:
        uni = is_unital(ch)
        info["unital"] = uni
        lines.append("unital" if uni else "non-unital")
        if not uni:
            e_id, sigma = nonunitality_witnesses(ch)
            lines.append(f"E(I) =\n    {_fmt_matrix(e_id)}")
            lines.append(f"tr(K_j^dag K_i) =\n    {_fmt_matrix(sigma)}")
    return True, lines, info


def _validate_super_choi(r: SuperChoi, info: dict, lines: list[str]) -> bool:
    ok = comb_validity(r)
    rank = r.rank()
    lines += [f"comb {'ok' if ok else 'FAILED'}", f"rank {rank}"]
    info.update(comb=ok, rank=rank)
    if not ok:
        return False
    ops = kraus_from_super_choi(r)
    nec = super_extreme_necessary(ops, r.d)
    flags = unital_class_check(r)
    lines.append(f"extremality necessary condition {'holds' if nec else 'fails'}")
    lines.append("IP {IP}, DS {DS}, UP {UP}".format(**{k: str(v).lower() for k, v in flags.items()}))
    info.update(extreme_necessary=nec, **flags)
    return True


def cmd_validate(args) -> int:
    obj = io.load(args.path)
    info: dict = {}
    lines: list[str] = []
    if isinstance(obj, KrausChannel):
        ok, lines, info = _validate_channel(obj)
    elif isinstance(obj, ChoiState):
        psd_tp = obj.is_valid()
        lines.append(f"Choi state {'ok' if psd_tp else 'FAILED'} (trace-preservation residual {obj.tp_residual():.3e})")
        info = {"kind": "choi", "valid": psd_tp}
        ok = psd_tp
        if ok:
            ok, more, sub = _validate_channel(kraus_from_choi(obj))
            lines += more
            info.update(sub, kind="choi")
    elif isinstance(obj, Superchannel):
        ures = max(max_abs(obj.V @ obj.V.conj().T - np.eye(len(obj.V))), max_abs(obj.W @ obj.W.conj().T - np.eye(len(obj.W))))
        uni = is_unitary(obj.V) and is_unitary(obj.W)
        lines.append(f"V, W unitary {'ok' if uni else 'FAILED'} (residual {ures:.3e})")
        info = {"kind": "superchannel", "class": obj.label, "unitary": uni, "unitarity_residual": ures}
        ok = uni and _validate_super_choi(super_choi(obj), info, lines)
    elif isinstance(obj, SuperChoi):
        info = {"kind": "super_choi"}
        ok = _validate_super_choi(obj, info, lines)
    else:
        raise io.MalformedInput("validate expects a channel, choi, superchannel or super_choi file")
    info["valid"] = bool(ok)
    if args.format == "json":
        _emit(json.dumps(info, indent=1, default=_json_default) + "\n", args.out)
    else:
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok else EXIT_INVALID


def _json_default(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    raise TypeError(type(x).__name__)


# --- decompose --------------------------------------------------------------


def _overrides(args, settings: dict) -> dict:
    kw = {}
    for key in ("budget", "restarts", "tol"):
        val = getattr(args, key, None)
        if val is None:
            val = settings.get(key)
        if val is not None:
            kw[key] = val
    return kw


def _build_task(args) -> tuple[dec.DecompositionTask, int]:
    obj = io.load(args.path)
    settings: dict = {}
    if isinstance(obj, dict):  # task file: target drawn from its seed
        settings = obj
        name = obj["task"]
        if name not in dec.TASKS:
            raise io.MalformedInput(f"task.task: unknown task {name!r}; choose from {', '.join(dec.TASKS)}")
        seed = args.seed if args.seed is not None else settings.get("seed", 0)
        target_ss, opt_ss = dec.instance_seeds(seed, name, 0)
        settings = {**settings, "opt_seed": opt_ss}
        target = dec.random_target(name, np.random.default_rng(target_ss))
        obj = ChoiState(target, 2, 2) if name == "channel" else SuperChoi(target)
        if args.task is None and args.terms is None:
            args.task = name if name != "channel" else None
            if name == "channel":
                args.terms = settings.get("terms")
    # a task file reproduces instance 0 of the table run with the same seed
    seed = settings.get("opt_seed", args.seed if args.seed is not None else 0)
    kw = _overrides(args, settings)
    if isinstance(obj, (KrausChannel, ChoiState)):
        if args.task is not None:
            raise UsageError("--task selects a superchannel task; channel files take --terms")
        w = obj if isinstance(obj, ChoiState) else choi_from_kraus(obj)
        if not w.is_valid():
            raise UsageError("target channel is not CPTP; run validate for details")
        if (w.d_in, w.d_out) != (2, 2):
            raise UsageError("channel decomposition needs a qubit channel")
        terms = args.terms if args.terms is not None else 2
        return dec.channel_task(w, terms, **kw), seed
    if isinstance(obj, (Superchannel, SuperChoi)):
        if args.terms is not None:
            raise UsageError("--terms applies to channel files; superchannel files take --task")
        r = super_choi(obj) if isinstance(obj, Superchannel) else obj
        if r.d != 2:
            raise UsageError("superchannel decomposition needs d=2")
        if not comb_validity(r):
            raise UsageError("target is not a valid superchannel; run validate for details")
        task = args.task or "S_to_4g"
        if task not in dec.TABLE_TASKS:
            raise UsageError(f"unknown superchannel task {task!r}; choose from {', '.join(dec.TABLE_TASKS)}")
        return dec.superchannel_task(r, task, **kw), seed
    raise io.MalformedInput("decompose expects a channel, choi, superchannel, super_choi or task file")


def cmd_decompose(args) -> int:
    task, seed = _build_task(args)
    counts = " + ".join(f"{dec.ANSATZ_FAMILIES[f][0]}" for f in task.ansatz)
    header = f"{task.name or 'custom'}: {len(task.ansatz)} terms of {task.ansatz[0]}, parameters {counts} = {task.n_params}"
    if args.dry_run:
        print(header)
        return EXIT_OK
    print(header, file=sys.stderr)
    res = dec.multistart_minimize(task, seed)
    data = {"kind": "result", **res.to_dict(), "parameters": task.n_params, "budget": task.budget}
    if args.out:
        io.write_atomic(args.out, json.dumps(data, indent=1) + "\n")
    print(f"best distance {res.best_distance:.6e} after {res.evaluations_used} evaluations (tol {task.tol:g})")
    return EXIT_OK if res.converged else EXIT_ABOVE_TOL


# --- table1 -----------------------------------------------------------------


def records_csv(records) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "task", "distance", "evals"])
    for r in records:
        w.writerow([r.instance, r.task, f"{r.distance:.6e}", r.evals])
    return buf.getvalue()


def summary_markdown(summaries, threshold: float) -> str:
    lines = [
        f"| Task | Parameters | Median distance | Min | Max | Success (<= {threshold:g}) |",
        "|---|---:|---:|---:|---:|---:|",
    ]
    for s in summaries:
        ok = round(s.success_fraction * s.instances)
        lines.append(
            f"| {dec.TASK_LABELS[s.task]} | {s.parameters} | {s.median:.2e} | {s.minimum:.2e} | {s.maximum:.2e} | {ok}/{s.instances} |"
        )
    return "\n".join(lines) + "\n"


def cmd_table1(args) -> int:
    tasks = tuple(args.task.split(",")) if args.task else dec.TABLE_TASKS
    for t in tasks:
        if t not in dec.TASKS:
            raise UsageError(f"unknown task {t!r}; choose from {', '.join(dec.TASKS)}")
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    cfg = dec.TableConfig(
        instances=args.instances,
        budget=args.budget if args.budget is not None else dec.SUPERCHANNEL_BUDGET,
        restarts=args.restarts if args.restarts is not None else 8,
        tol=args.tol if args.tol is not None else dec.SUPERCHANNEL_TOL,
        seed=args.seed if args.seed is not None else 0,
        tasks=tasks,
        threshold=args.tol if args.tol is not None else dec.SUPERCHANNEL_TOL,
    )
    records = dec.run_table_tasks(cfg)
    table = summary_markdown(dec.summarize(records, cfg.threshold), cfg.threshold)
    rows = records_csv(records)
    if args.out:
        out = Path(args.out)
        io.write_atomic(out / "table1.csv", rows)
        io.write_atomic(out / "table1.md", table)
    sys.stdout.write(rows if args.format == "csv" else table)
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scsim", description="Quantum channels, superchannels and their convex decompositions.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr (-vv for every local search)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random channel or superchannel file")
    g.add_argument("kind", choices=["channel", "superchannel"])
    g.add_argument("klass", nargs="?", metavar="class", help=f"superchannel class: {', '.join(CLASSES)} (default full)")
    g.add_argument("--d", type=int, default=2, help="system dimension (default 2)")
    g.add_argument("--rank", type=int, default=4, help="Kraus rank for channels (default 4)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output file (default stdout)")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="check validity, rank, extremality and unitality of a file")
    v.add_argument("path")
    v.add_argument("--format", choices=["text", "json"], default="text")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("decompose", help="fit a channel or superchannel by a mixture of gen-extreme terms")
    d.add_argument("path", help="channel, choi, superchannel, super_choi or task file")
    d.add_argument("--terms", type=int, help="number of gen-extreme terms for channel targets (default 2)")
    d.add_argument("--task", help=f"superchannel task: {', '.join(dec.TABLE_TASKS)} (default S_to_4g)")
    d.add_argument("--dry-run", action="store_true", help="report parameter counts only")
    _search_flags(d)
    d.add_argument("--out", help="write the result JSON here")
    d.set_defaults(func=cmd_decompose)

    t = sub.add_parser("table1", help="run the superchannel decomposition table on random instances")
    t.add_argument("--instances", type=int, default=10)
    t.add_argument("--task", help="comma-separated subset of tasks (default all four)")
    t.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    _search_flags(t)
    t.add_argument("--out", help="directory for table1.csv and table1.md")
    t.set_defaults(func=cmd_table1)
    return p


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (default 0, or the task file's seed)")
    p.add_argument("--budget", type=int, help="max loss/gradient evaluations per instance")
    p.add_argument("--restarts", type=int, help="random initial local searches (default 8)")
    p.add_argument("--tol", type=float, help="stop once the trace distance is at most this")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("jax").setLevel(logging.WARNING)
    try:
        return args.func(args)
    except io.MalformedInput as e:
        print(f"malformed input: {e}", file=sys.stderr)
        return EXIT_MALFORMED
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MALFORMED
    except FileNotFoundError as e:
        print(f"error: {e.filename}: no such file", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
