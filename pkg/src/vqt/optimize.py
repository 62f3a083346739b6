"""Multi-start quasi-Newton ascent of the penalized coherent information."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from vqt import ansatz
from vqt.protocols import FEASIBILITY_TOL, EvaluationRecord, Pipeline, ProtocolConfig


@dataclass
class RestartResult:
    restart: int
    seed: int
    params: list
    record: EvaluationRecord | None
    trace: list = field(default_factory=list)  # (iteration, objective, violation)
    evaluations: int = 0


@dataclass
class OptimizationResult:
    config: ProtocolConfig
    params: list
    record: EvaluationRecord | None
    feasible: bool
    restarts: list
    wall_time_s: float

    @property
    def restarts_used(self) -> int:
        return len(self.restarts)

    def to_dict(self, with_traces: bool = True) -> dict:
        out = {
            "config": self.config.to_dict(),
            "params": [float(x) for x in self.params],
            "record": self.record.to_dict() if self.record else None,
            "feasible": self.feasible,
            "restarts_used": self.restarts_used,
            "wall_time_s": self.wall_time_s,
            "restarts": [
                {"restart": r.restart, "seed": r.seed, "evaluations": r.evaluations,
                 "record": r.record.to_dict() if r.record else None,
                 **({"trace": r.trace} if with_traces else {})}
                for r in self.restarts
            ],
        }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizationResult":
        restarts = [RestartResult(r["restart"], r["seed"], [], EvaluationRecord.from_dict(r["record"])
                                  if r.get("record") else None, r.get("trace", []), r.get("evaluations", 0))
                    for r in d.get("restarts", [])]
        rec = EvaluationRecord.from_dict(d["record"]) if d.get("record") else None
        return cls(ProtocolConfig.from_dict(d["config"]), d["params"], rec, d["feasible"],
                   restarts, d.get("wall_time_s", 0.0))


def restart_seed(seed: int, k: int) -> int:
    """Deterministic sub-seed for restart ``k``."""
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


class _Objective:
    """Negated penalized objective with bookkeeping of the best feasible point seen."""

    def __init__(self, pipeline: Pipeline, mu: float):
        self.pl = pipeline
        self.mu = mu
        self.best = None  # (I_c, params, record)
        self.last = None  # (params, J, record)
        self.count = 0

    def _note(self, x, rec, j):
        self.count += 1
        self.last = (x.copy(), j, rec)
        if rec.feasible and (self.best is None or rec.I_c > self.best[0]):
            self.best = (rec.I_c, x.copy(), rec)

    def __call__(self, x):
        cfg = self.pl.config
        if cfg.gradient == "adjoint":
            rec, j, g = self.pl.evaluate(x, grad=True, mu=self.mu)
        else:
            rec, j, _ = self.pl.evaluate(x, mu=self.mu)
            h = cfg.grad_step
            g = np.empty_like(x)
            for i in range(x.size):
                e = np.zeros_like(x)
                e[i] = h
                g[i] = (self.pl.evaluate(x + e, mu=self.mu)[1] - self.pl.evaluate(x - e, mu=self.mu)[1]) / (2 * h)
        self._note(x, rec, j)
        return -j, -g


class _Stop:
    """Stops once ``|dJ| < tol`` for ``patience`` consecutive iterations."""

    def __init__(self, obj: _Objective, tol: float, patience: int, trace: list, offset: int):
        self.obj, self.tol, self.patience, self.trace = obj, tol, patience, trace
        self.offset = offset
        self.hist: list[float] = []

    def __call__(self, intermediate_result):
        j = -float(intermediate_result.fun)
        rec = self.obj.last[2] if self.obj.last is not None else None
        viol = rec.violation if rec is not None else math.nan
        self.trace.append((self.offset + len(self.hist) + 1, j, viol))
        self.hist.append(j)
        if len(self.hist) > self.patience:
            recent = np.abs(np.diff(self.hist[-(self.patience + 1):]))
            if np.all(recent < self.tol):
                raise StopIteration


def embed_unassisted(params, layers: int) -> np.ndarray:
    """Map parameters of an unassisted pipeline onto the assisted one with an idle ancilla.

    ``ECD(0)`` on the ancilla is a bare qubit flip.  Conjugating by a flip maps
    ``ECD(b) -> ECD(-b)`` and ``R(theta, phi) -> R(theta, -phi)``, so the extra
    flips are pushed to the end of the circuit, where the qubit is discarded, by
    flipping signs layer by layer.  The resulting pipeline output is identical.
    """
    x = np.asarray(params, float)
    n_opt, n_one = 6 * layers, 4 * layers
    if x.size != n_opt + 2 * n_one:
        raise ValueError("parameter vector does not match an unassisted pipeline")
    opt = x[:n_opt]
    blocks = [x[n_opt:n_opt + n_one], x[n_opt + n_one:]]
    out = [opt]
    for j, chunk in enumerate(blocks):
        per = chunk.reshape(layers, 4)
        new = np.zeros((layers, 6))
        for m in range(layers):
            # flips to the left of layer m: m from this block, plus all L from the
            # microwave block when this is the decoder
            sign = -1.0 if (m + j * layers) % 2 else 1.0
            new[m, 0:2] = sign * per[m, 0:2]
            new[m, 4] = per[m, 2]
            new[m, 5] = sign * per[m, 3]
        out.append(new.ravel())
    return np.concatenate(out)


def run_restart(config: ProtocolConfig, k: int, x0=None) -> RestartResult:
    """One local ascent with penalty continuation.

    Starts from ``random_init`` with the restart's sub-seed unless ``x0`` is given.
    """
    pl = Pipeline(config)
    seed = restart_seed(config.seed, k)
    x = (ansatz.random_init(pl.blocks(), seed, scale=config.init_scale) if x0 is None
         else np.array(x0, dtype=float))
    mu = config.mu
    trace: list = []
    obj = _Objective(pl, mu)
    for _round in range(1 + config.penalty_rounds):
        obj.mu = mu
        stop = _Stop(obj, config.tol, config.patience, trace, len(trace))
        res = minimize(obj, x, jac=True, method="BFGS", callback=stop,
                       options={"maxiter": config.max_iter, "gtol": 1e-7})
        x = res.x
        final = pl.evaluate(x, mu=mu)[0]
        if final.violation <= FEASIBILITY_TOL:
            break
        mu *= 10.0
    if obj.best is not None:
        params, rec = obj.best[1], obj.best[2]
    else:
        params, rec = x, pl.evaluate(x)[0]
    return RestartResult(k, seed, [float(v) for v in params], rec, trace, obj.count)


def _better(a: RestartResult, b: RestartResult | None) -> bool:
    if b is None:
        return True
    fa = a.record is not None and a.record.feasible
    fb = b.record is not None and b.record.feasible
    if fa != fb:
        return fa
    return a.record.I_c > b.record.I_c


def optimize(config: ProtocolConfig, workers: int = 1, warm_starts=()) -> OptimizationResult:
    """Best of ``config.restarts`` random restarts plus any ``warm_starts``.

    Warm starts are numbered after the random restarts.  Results do not depend
    on ``workers``.
    """
    t0 = time.perf_counter()
    ks = list(range(config.restarts))
    starts = [None] * len(ks) + [np.asarray(w, float) for w in warm_starts]
    ks += list(range(config.restarts, len(starts)))
    if workers > 1 and len(ks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run_restart, [config] * len(ks), ks, starts))
    else:
        results = [run_restart(config, k, x0) for k, x0 in zip(ks, starts)]
    best = None
    for r in results:  # ascending restart index, so ties keep the earliest
        if _better(r, best):
            best = r
    feasible = best.record is not None and best.record.feasible
    return OptimizationResult(config, best.params, best.record, feasible, results,
                              time.perf_counter() - t0)


def reevaluate(config: ProtocolConfig, params) -> EvaluationRecord:
    return Pipeline(config).evaluate(np.asarray(params, float))[0]
