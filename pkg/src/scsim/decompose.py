"""Convex decomposition of channels and superchannels into gen-extreme terms.

The objective is the trace distance between a target Choi state and a
mixture of parametrised ansatz Choi states. Local searches run L-BFGS on
the squared Frobenius distance (smooth, same zero set) with JAX gradients;
every local result is scored with the exact trace distance and the best
one is kept.
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .channels import ChoiState, KrausChannel, choi_from_kraus, gen_extreme_channel, random_channel
from .linalg import trace_distance
from .superchannels import (
    RANK8_PARAMS,
    GenExtremeSuperCircuit,
    SuperChoi,
    gen_extreme_super,
    random_superchannel,
    rank8_superchannel,
    super_choi,
)

log = logging.getLogger(__name__)


def _ge_channel_choi(a: np.ndarray) -> np.ndarray:
    return choi_from_kraus(gen_extreme_channel(a)).matrix


def _circuit_choi(kind: str) -> Callable[[np.ndarray], np.ndarray]:
    return lambda a: super_choi(gen_extreme_super(GenExtremeSuperCircuit(kind, a))).matrix


# family name -> (parameter count, numpy Choi builder)
ANSATZ_FAMILIES: dict[str, tuple[int, Callable[[np.ndarray], np.ndarray]]] = {
    "gen_extreme_channel": (14, _ge_channel_choi),
    "type_I": (GenExtremeSuperCircuit.param_count("I"), _circuit_choi("I")),
    "type_II": (GenExtremeSuperCircuit.param_count("II"), _circuit_choi("II")),
    "type_III": (GenExtremeSuperCircuit.param_count("III"), _circuit_choi("III")),
    "rank8": (RANK8_PARAMS, lambda a: super_choi(rank8_superchannel(a)).matrix),
}

# task name -> (target class, ansatz family, number of terms)
TASKS: dict[str, tuple[str, str, int]] = {
    "S_to_2r8": ("full", "rank8", 2),
    "S_to_4g": ("full", "type_I", 4),
    "r8_to_2g": ("rank8", "type_I", 2),
    "r8_to_4g": ("rank8", "type_I", 4),
    "channel": ("channel", "gen_extreme_channel", 2),
}

TABLE_TASKS = ("S_to_2r8", "S_to_4g", "r8_to_2g", "r8_to_4g")

TASK_LABELS = {
    "S_to_2r8": "S -> 2 S^8",
    "S_to_4g": "S -> 4 S^g",
    "r8_to_2g": "S^8 -> 2 S^g",
    "r8_to_4g": "S^8 -> 4 S^g",
    "channel": "E -> 2 E^g",
}

CHANNEL_BUDGET = 50_000
SUPERCHANNEL_BUDGET = 500_000
CHANNEL_TOL = 1e-3
SUPERCHANNEL_TOL = 5e-3


@dataclass(frozen=True)
class DecompositionTask:
    """What to decompose and how hard to try.

    ``weights`` is ``"uniform"`` or ``"free"``; free weights are the softmax
    of extra parameters appended after the ansatz angles.
    """

    target: np.ndarray
    ansatz: tuple[str, ...]
    weights: str = "uniform"
    budget: int = SUPERCHANNEL_BUDGET
    restarts: int = 8
    tol: float = SUPERCHANNEL_TOL
    perturb_rounds: int | None = None
    perturb_samples: int = 2
    sigma: float = 0.2
    local_maxiter: int = 3000
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=complex))
        object.__setattr__(self, "ansatz", tuple(self.ansatz))
        for f in self.ansatz:
            if f not in ANSATZ_FAMILIES:
                raise ValueError(f"unknown ansatz family {f!r}")
        if not self.ansatz:
            raise ValueError("need at least one ansatz term")
        if self.weights not in ("uniform", "free"):
            raise ValueError("weights must be 'uniform' or 'free'")

    @property
    def free_weights(self) -> bool:
        return self.weights == "free"

    @property
    def n_angles(self) -> int:
        return sum(ANSATZ_FAMILIES[f][0] for f in self.ansatz)

    @property
    def n_params(self) -> int:
        return self.n_angles + (len(self.ansatz) if self.free_weights else 0)

    def split(self, params: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Per-term angle blocks and the mixing weights."""
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.n_params:
            raise ValueError(f"task needs {self.n_params} parameters, got {params.size}")
        blocks, pos = [], 0
        for f in self.ansatz:
            n = ANSATZ_FAMILIES[f][0]
            blocks.append(params[pos : pos + n])
            pos += n
        if self.free_weights:
            z = params[pos:]
            w = np.exp(z - z.max())
            weights = w / w.sum()
        else:
            weights = np.full(len(self.ansatz), 1.0 / len(self.ansatz))
        return blocks, weights


@dataclass
class DecompositionResult:
    best_angles: np.ndarray
    best_distance: float
    evaluations_used: int
    per_restart_trace: list[tuple[int, float]]
    seed: int
    incumbent_trace: list[float] = field(default_factory=list)
    weights: np.ndarray | None = None
    tol: float = 0.0
    task: str = ""

    @property
    def converged(self) -> bool:
        return self.best_distance <= self.tol

    def to_dict(self) -> dict:
        out = asdict(self)
        out["best_angles"] = [float(x) for x in self.best_angles]
        out["weights"] = None if self.weights is None else [float(x) for x in self.weights]
        out["per_restart_trace"] = [[int(i), float(v)] for i, v in self.per_restart_trace]
        out["converged"] = self.converged
        return out


def mixture_choi(task: DecompositionTask, params: Sequence[float]) -> np.ndarray:
    blocks, weights = task.split(np.asarray(params))
    return sum(w * ANSATZ_FAMILIES[f][1](b) for f, b, w in zip(task.ansatz, blocks, weights))


def objective(task: DecompositionTask, params: Sequence[float]) -> float:
    """Trace distance between the target and the ansatz mixture at ``params``."""
    return trace_distance(task.target, mixture_choi(task, params))


class _OutOfBudget(Exception):
    pass


def _local_search(task, x0, maxfun, vg) -> tuple[np.ndarray, int]:
    """L-BFGS from ``x0`` with a hard cap of ``maxfun`` loss/gradient evaluations."""
    target = task.target
    state = {"n": 0, "x": np.array(x0, dtype=float), "f": np.inf}

    def fun(x):
        if state["n"] >= maxfun:
            raise _OutOfBudget
        state["n"] += 1
        v, g = vg(x, target)
        v = float(v)
        if v < state["f"]:
            state["f"], state["x"] = v, np.array(x, dtype=float)
        return v, np.asarray(g)

    try:
        minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": task.local_maxiter, "maxfun": maxfun, "ftol": 1e-22, "gtol": 1e-14},
        )
    except _OutOfBudget:
        pass
    return state["x"], state["n"]


def _start_point(task: DecompositionTask, rng: np.random.Generator) -> np.ndarray:
    x = rng.uniform(0.0, 2 * np.pi, task.n_params)
    if task.free_weights:
        x[task.n_angles :] = 0.0
    return x


def multistart_minimize(task: DecompositionTask, seed: int | np.random.SeedSequence = 0) -> DecompositionResult:
    """Multi-start local search followed by perturbed restarts around the incumbent.

    Phase one runs ``restarts`` local searches from uniform random angles in
    ``[0, 2 pi)``. Phase two runs rounds of ``perturb_samples`` searches
    started from the incumbent plus Gaussian noise of width ``sigma``, for
    ``perturb_rounds`` rounds or (``None``) until the budget runs out. Stops
    as soon as the incumbent reaches ``tol`` or the evaluation budget is
    spent. Search ``k`` draws its random numbers from its own stream derived
    from ``(seed, k)``.
    """
    if task.restarts < 1:
        raise ValueError("multistart_minimize needs at least one restart")
    if task.budget < 1:
        raise ValueError("budget must be positive")
    from . import _kernels

    _, vg = _kernels.compiled(task.ansatz, task.free_weights)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    seed_value = int(ss.entropy) if isinstance(ss.entropy, int) else 0

    best_x: np.ndarray | None = None
    best = np.inf
    used = 0
    trace: list[tuple[int, float]] = []
    incumbent: list[float] = []

    def schedule():
        yield from (("random", k) for k in range(task.restarts))
        if task.perturb_samples < 1:
            return
        rounds = itertools.count() if task.perturb_rounds is None else range(task.perturb_rounds)
        for r in rounds:
            for j in range(task.perturb_samples):
                yield "perturb", task.restarts + r * task.perturb_samples + j

    for kind, k in schedule():
        remaining = task.budget - used
        if best_x is not None and (remaining <= 1 or best <= task.tol):
            break
        rng = np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, k)))
        if kind == "random" or best_x is None:
            x0 = _start_point(task, rng)
        else:
            x0 = best_x + task.sigma * rng.standard_normal(task.n_params)
        # one evaluation is reserved for the exact trace-distance score
        x, nfev = _local_search(task, x0, max(remaining - 1, 0), vg)
        dist = objective(task, x)
        used += nfev + 1
        trace.append((k, dist))
        if dist < best:
            best, best_x = dist, x
        incumbent.append(best)
        log.debug("search %d (%s): distance %.3e, %d evals, incumbent %.3e", k, kind, dist, nfev, best)

    assert best_x is not None
    _, weights = task.split(best_x)
    return DecompositionResult(
        best_angles=best_x,
        best_distance=float(best),
        evaluations_used=used,
        per_restart_trace=trace,
        seed=seed_value,
        incumbent_trace=incumbent,
        weights=weights,
        tol=task.tol,
        task=task.name,
    )


def channel_task(target: KrausChannel | ChoiState, terms: int = 2, **kw) -> DecompositionTask:
    w = target if isinstance(target, ChoiState) else choi_from_kraus(target)
    if w.d_in != 2 or w.d_out != 2:
        raise ValueError("channel decomposition is implemented for qubit channels")
    if terms < 1:
        raise ValueError("terms must be >= 1")
    kw.setdefault("budget", CHANNEL_BUDGET)
    kw.setdefault("tol", CHANNEL_TOL)
    kw.setdefault("name", "channel")
    return DecompositionTask(target=w.matrix, ansatz=("gen_extreme_channel",) * terms, **kw)


def decompose_channel(target: KrausChannel | ChoiState, terms: int = 2, seed: int = 0, **kw) -> DecompositionResult:
    """Fit ``target`` by a mixture of ``terms`` gen-extreme qubit channels."""
    return multistart_minimize(channel_task(target, terms, **kw), seed)


def superchannel_task(target: SuperChoi | np.ndarray, task: str | Sequence[str] = "S_to_4g", **kw) -> DecompositionTask:
    matrix = target.matrix if isinstance(target, SuperChoi) else np.asarray(target, dtype=complex)
    if matrix.shape != (16, 16):
        raise ValueError("superchannel decomposition is implemented for qubit superchannels (16 x 16 Choi)")
    if isinstance(task, str):
        if task not in TASKS or task == "channel":
            raise ValueError(f"unknown superchannel task {task!r}; choose from {TABLE_TASKS}")
        _, family, terms = TASKS[task]
        ansatz = (family,) * terms
        kw.setdefault("name", task)
    else:
        ansatz = tuple(task)
    kw.setdefault("budget", SUPERCHANNEL_BUDGET)
    kw.setdefault("tol", SUPERCHANNEL_TOL)
    return DecompositionTask(target=matrix, ansatz=ansatz, **kw)


def decompose_superchannel(target: SuperChoi | np.ndarray, task: str | Sequence[str] = "S_to_4g", seed: int = 0, **kw) -> DecompositionResult:
    """Run one of the table tasks (or a custom list of ansatz families) on a super-Choi target."""
    return multistart_minimize(superchannel_task(target, task, **kw), seed)


def task_param_count(task: str) -> int:
    _, family, terms = TASKS[task]
    return terms * ANSATZ_FAMILIES[family][0]


# --- table reproduction ------------------------------------------------------


@dataclass(frozen=True)
class TableConfig:
    instances: int = 10
    budget: int = SUPERCHANNEL_BUDGET
    restarts: int = 8
    tol: float = SUPERCHANNEL_TOL
    seed: int = 0
    tasks: tuple[str, ...] = TABLE_TASKS
    threshold: float = SUPERCHANNEL_TOL
    workers: int | None = None


@dataclass(frozen=True)
class InstanceRecord:
    instance: int
    task: str
    distance: float
    evals: int


def random_target(task: str, rng: np.random.Generator) -> np.ndarray:
    klass = TASKS[task][0]
    if klass == "channel":
        return choi_from_kraus(random_channel(2, 4, rng)).matrix
    return super_choi(random_superchannel(klass, rng)).matrix


def instance_seeds(master: int, task: str, instance: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent streams for the target and the optimizer of one table cell."""
    task_index = list(TASKS).index(task)
    target_ss, opt_ss = np.random.SeedSequence([master, task_index, instance]).spawn(2)
    return target_ss, opt_ss


def run_instance(task: str, instance: int, config: TableConfig) -> InstanceRecord:
    target_ss, opt_ss = instance_seeds(config.seed, task, instance)
    target = random_target(task, np.random.default_rng(target_ss))
    if task == "channel":
        t = channel_task(ChoiState(target, 2, 2), budget=config.budget, restarts=config.restarts, tol=config.tol)
    else:
        t = superchannel_task(target, task, budget=config.budget, restarts=config.restarts, tol=config.tol)
    res = multistart_minimize(t, opt_ss)
    log.info("%s instance %d: distance %.3e (%d evals)", task, instance, res.best_distance, res.evaluations_used)
    return InstanceRecord(instance, task, res.best_distance, res.evaluations_used)


def _run_cell(args):
    return run_instance(*args)


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("SCF_NUM_WORKERS")
    return max(1, int(env)) if env else 1


def run_table_tasks(config: TableConfig = TableConfig()) -> list[InstanceRecord]:
    """Run every (task, instance) cell; records come back ordered by task then instance."""
    if config.instances < 1:
        raise ValueError("instances must be >= 1")
    cells = [(task, i, config) for task in config.tasks for i in range(config.instances)]
    workers = worker_count(config.workers)
    if workers == 1:
        return [_run_cell(c) for c in cells]
    import multiprocessing

    with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(_run_cell, cells))


@dataclass(frozen=True)
class TaskSummary:
    task: str
    parameters: int
    median: float
    minimum: float
    maximum: float
    success_fraction: float
    instances: int


def summarize(records: Sequence[InstanceRecord], threshold: float = SUPERCHANNEL_TOL) -> list[TaskSummary]:
    out = []
    for task in dict.fromkeys(r.task for r in records):
        d = np.array([r.distance for r in records if r.task == task])
        out.append(
            TaskSummary(
                task=task,
                parameters=task_param_count(task),
                median=float(np.median(d)),
                minimum=float(d.min()),
                maximum=float(d.max()),
                success_fraction=float(np.mean(d <= threshold)),
                instances=int(d.size),
            )
        )
    return out
