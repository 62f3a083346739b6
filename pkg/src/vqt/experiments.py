"""Sweep configuration, per-point execution and result files.

A sweep runs every ``(protocol, eta)`` point of an :class:`ExperimentConfig`
and writes one JSON file per point plus a combined ``results.csv``.  Point
files carry a key derived from the settings that determine the result, so a
rerun into the same directory reuses matching points instead of recomputing.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from vqt.baselines import (AQT_CUTOFF, D1_RANGE, D2_RANGE, GKP_CUTOFF, BaselineResult, GkpQtParams, aqt_states,
                           gkp_qt_states, optimize_aqt, optimize_gkp_qt, tms_ea_baseline)
from vqt.capacity import pure_loss_capacity_constrained
from vqt.optimize import embed_unassisted, optimize
from vqt.protocols import Pipeline, ProtocolConfig

SCHEMA_VERSION = 1
PROTOCOLS = ("direct", "tms-ea", "vqt-no-ea", "vqt", "vqt-adaptive-no-ea", "vqt-adaptive", "gkp-qt", "aqt")
VARIATIONAL = {
    "vqt": (False, True),
    "vqt-no-ea": (False, False),
    "vqt-adaptive": (True, True),
    "vqt-adaptive-no-ea": (True, False),
}
# unassisted variant whose optimum seeds the assisted one
WARM_FROM = {"vqt": "vqt-no-ea", "vqt-adaptive": "vqt-adaptive-no-ea"}
CSV_COLUMNS = ("protocol", "eta", "I_c", "n_S", "n_P", "violation", "restarts_used", "seed", "wall_time_s")
TIMING_FIELDS = ("wall_time_s", "timestamp")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class VariationalSettings:
    layers: int = 6
    cutoff: int = 20
    cutoff_a: int = 16
    cutoff_r: int | None = None
    restarts: int = 8
    max_iter: int = 400
    mu: float = 10.0
    tol: float = 1e-5
    patience: int = 5
    gradient: str = "adjoint"
    grad_step: float = 1e-4
    init_scale: float = 0.6
    penalty_rounds: int = 3
    leakage_weight: float = 1e6
    homodyne_phase: float = math.pi


@dataclass(frozen=True)
class GkpSettings:
    d1: tuple = D1_RANGE
    d2: tuple = D2_RANGE
    cutoff: int = GKP_CUTOFF
    max_iter: int = 150


@dataclass(frozen=True)
class AqtSettings:
    cutoff: int = AQT_CUTOFF
    max_iter: int = 80


@dataclass(frozen=True)
class TmsSettings:
    gain_step: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    protocols: tuple
    etas: tuple
    n_s: float = 2.0
    n_p: float = 2.0
    seed: int = 0
    workers: int | None = None
    out: str | None = None
    warm_start: bool = True
    vqt: VariationalSettings = field(default_factory=VariationalSettings)
    gkp: GkpSettings = field(default_factory=GkpSettings)
    aqt: AqtSettings = field(default_factory=AqtSettings)
    tms: TmsSettings = field(default_factory=TmsSettings)
    schema: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"schema: unsupported version {self.schema!r} (expected {SCHEMA_VERSION})")
        if not self.protocols:
            raise ConfigError("protocols: at least one protocol is required")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ConfigError(f"protocols: unknown protocol {p!r}; choose from {', '.join(PROTOCOLS)}")
        if not self.etas:
            raise ConfigError("etas: at least one transmissivity is required")
        for e in self.etas:
            if not isinstance(e, (int, float)) or isinstance(e, bool) or not 0.0 <= e <= 1.0:
                raise ConfigError(f"etas: {e!r} is not a number in [0, 1]")
        if self.n_s <= 0 or self.n_p <= 0:
            raise ConfigError("n_s/n_p: energy caps must be positive")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers: must be >= 1")

    def replace(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(kw)
        return config_from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["protocols"] = list(self.protocols)
        d["etas"] = list(self.etas)
        d["gkp"]["d1"] = list(self.gkp.d1)
        d["gkp"]["d2"] = list(self.gkp.d2)
        return d

    def protocol_config(self, protocol: str, eta: float) -> ProtocolConfig:
        adaptive, with_ea = VARIATIONAL[protocol]
        return ProtocolConfig(eta=float(eta), n_s=self.n_s, n_p=self.n_p, adaptive=adaptive, with_ea=with_ea,
                              seed=self.seed, **asdict(self.vqt))


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    vals = dict(raw)
    for k in ("d1", "d2"):
        if k in vals:
            vals[k] = tuple(int(v) for v in vals[k])
    try:
        return cls(**vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    if "schema" not in raw:
        raise ConfigError("schema: missing version field")
    for req in ("protocols", "etas"):
        if req not in raw:
            raise ConfigError(f"{req}: missing")
    vals = dict(raw)
    vals["protocols"] = tuple(vals["protocols"]) if isinstance(vals["protocols"], list) else vals["protocols"]
    vals["etas"] = tuple(vals["etas"]) if isinstance(vals["etas"], list) else vals["etas"]
    if not isinstance(vals["protocols"], tuple) or not isinstance(vals["etas"], tuple):
        raise ConfigError("protocols/etas: expected lists")
    vals["vqt"] = _section(VariationalSettings, raw.get("vqt"), "vqt")
    vals["gkp"] = _section(GkpSettings, raw.get("gkp"), "gkp")
    vals["aqt"] = _section(AqtSettings, raw.get("aqt"), "aqt")
    vals["tms"] = _section(TmsSettings, raw.get("tms"), "tms")
    try:
        return ExperimentConfig(**vals)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(raw)


# ----------------------------------------------------------------------------
# points

def point_settings(cfg: ExperimentConfig, protocol: str, eta: float) -> dict:
    """Everything that determines a point's result."""
    base = {"protocol": protocol, "eta": float(eta), "n_s": cfg.n_s, "n_p": cfg.n_p}
    if protocol in VARIATIONAL:
        base["config"] = cfg.protocol_config(protocol, eta).to_dict()
        if cfg.warm_start and protocol in WARM_FROM and WARM_FROM[protocol] in cfg.protocols:
            base["warm_from"] = point_settings(cfg, WARM_FROM[protocol], eta)
    elif protocol == "gkp-qt":
        base["gkp"] = asdict(cfg.gkp)
        base["seed"] = cfg.seed
    elif protocol == "aqt":
        base["aqt"] = asdict(cfg.aqt)
    elif protocol == "tms-ea":
        base["tms"] = asdict(cfg.tms)
    return base


def point_key(settings: dict) -> str:
    blob = json.dumps(settings, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def point_path(out: Path, protocol: str, eta: float) -> Path:
    return out / f"{protocol}_eta{eta:.4f}.json"


def _row(protocol, eta, ic, n_s, n_p, viol, restarts, seed, wall) -> dict:
    return {"protocol": protocol, "eta": float(eta), "I_c": float(ic), "n_S": float(n_s), "n_P": float(n_p),
            "violation": float(viol), "restarts_used": int(restarts), "seed": int(seed),
            "wall_time_s": float(wall)}


def run_point(cfg: ExperimentConfig, protocol: str, eta: float, workers: int = 1, warm=None) -> dict:
    """Compute one point; returns the JSON-ready document (without file metadata)."""
    t0 = time.perf_counter()
    if protocol == "direct":
        ic = pure_loss_capacity_constrained(eta, cfg.n_s)
        doc = {"result": {"I_c": ic}, "feasible": True,
               "row": _row(protocol, eta, ic, cfg.n_s, 0.0, 0.0, 0, cfg.seed, 0.0)}
    elif protocol == "tms-ea":
        ic, gain = tms_ea_baseline(eta, cfg.n_s, cfg.n_p, cfg.tms.gain_step)
        doc = {"result": {"I_c": ic, "gain": float(gain)}, "feasible": True,
               "row": _row(protocol, eta, ic, cfg.n_s, gain - 1.0, 0.0, 0, cfg.seed, 0.0)}
    elif protocol in VARIATIONAL:
        pc = cfg.protocol_config(protocol, eta)
        starts = []
        if warm is not None:
            starts.append(embed_unassisted(warm, pc.layers))
        res = optimize(pc, workers=workers, warm_starts=starts)
        rec = res.record
        doc = {"result": res.to_dict(), "feasible": res.feasible,
               "row": _row(protocol, eta, rec.I_c, rec.n_S, rec.n_P, rec.violation, res.restarts_used,
                           cfg.seed, res.wall_time_s)}
    elif protocol == "gkp-qt":
        res = optimize_gkp_qt(eta, cfg.n_s, cfg.n_p, cfg.gkp.d1, cfg.gkp.d2, cfg.gkp.cutoff,
                              cfg.gkp.max_iter, cfg.seed)
        doc = _baseline_doc(res, 2 * len(cfg.gkp.d1) * len(cfg.gkp.d2), cfg.seed)
    elif protocol == "aqt":
        res = optimize_aqt(eta, cfg.n_s, cfg.n_p, cfg.aqt.cutoff, cfg.aqt.max_iter)
        doc = _baseline_doc(res, 5, cfg.seed)
    else:
        raise ConfigError(f"protocols: unknown protocol {protocol!r}")
    if protocol in ("direct", "tms-ea"):
        doc["row"]["wall_time_s"] = time.perf_counter() - t0
    return doc


def _baseline_doc(res: BaselineResult, starts: int, seed: int) -> dict:
    rec = res.record
    if rec is None:
        return {"result": res.to_dict(), "feasible": False,
                "row": _row(res.protocol.replace("_", "-"), res.eta, math.nan, math.nan, math.nan, math.nan,
                            starts, seed, res.wall_time_s)}
    return {"result": res.to_dict(), "feasible": rec.feasible,
            "row": _row(res.protocol.replace("_", "-"), res.eta, rec.I_c, rec.n_S, rec.n_P, rec.violation,
                        starts, seed, res.wall_time_s)}


def _ordered_points(cfg: ExperimentConfig):
    """Unassisted variants first so they can seed the assisted ones; ``eta`` order kept."""
    order = sorted(cfg.protocols, key=PROTOCOLS.index)
    return [(p, float(e)) for p in order for e in cfg.etas]


def write_json(path: Path, doc: dict):
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def run_sweep(cfg: ExperimentConfig, out, workers: int = 1, resume: bool = True, log=None) -> dict:
    """Run or reuse every point; returns ``{(protocol, eta): document}`` and writes ``results.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    docs: dict = {}
    for protocol, eta in _ordered_points(cfg):
        settings = point_settings(cfg, protocol, eta)
        key = point_key(settings)
        path = point_path(out, protocol, eta)
        doc = None
        if resume and path.exists():
            try:
                old = json.loads(path.read_text())
            except json.JSONDecodeError:
                old = None
            if old is not None and old.get("key") == key:
                doc = old
        if doc is None:
            warm = None
            if "warm_from" in settings:
                src = docs.get((WARM_FROM[protocol], eta))
                if src is not None and src["result"].get("params"):
                    warm = src["result"]["params"]
            doc = run_point(cfg, protocol, eta, workers, warm)
            doc.update({"schema": SCHEMA_VERSION, "protocol": protocol, "eta": eta, "key": key,
                        "settings": settings,
                        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")})
            write_json(path, doc)
        if log is not None:
            r = doc["row"]
            log(f"{protocol:>20s} eta={eta:.3f} I_c={r['I_c']:.4f} feasible={doc['feasible']}")
        docs[(protocol, eta)] = doc
    order = [(p, float(e)) for p in cfg.protocols for e in cfg.etas]
    (out / "results.csv").write_text(rows_to_csv([docs[k]["row"] for k in order]))
    return docs


def strip_timing(obj):
    """Copy of a result document with wall-clock fields removed (for reproducibility checks)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def csv_without_timing(text: str) -> str:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return ""
    keep = [i for i, c in enumerate(rows[0]) if c not in TIMING_FIELDS]
    return "\n".join(",".join(r[i] for i in keep) for r in rows)


# ----------------------------------------------------------------------------
# reconstruction from stored results

class MissingParamsError(ValueError):
    """The result file holds no state parameters to rebuild inputs from."""


def load_point(path) -> dict:
    return json.loads(Path(path).read_text())


def reevaluate_point(doc: dict):
    """Re-run the evaluator on stored parameters; returns the fresh record."""
    protocol = doc["protocol"]
    res = doc["result"]
    if protocol in VARIATIONAL:
        pc = ProtocolConfig.from_dict(res["config"])
        return Pipeline(pc).evaluate(np.asarray(res["params"], float))[0]
    if protocol == "gkp-qt":
        from vqt.baselines import run_gkp_qt
        p = res["params"]
        gp = GkpQtParams(tuple(p["weights"]), p["s_phi1"], p["s_r"], p["p_phi1"], p["p_r"], p["p_phi2"])
        s = doc["settings"]
        return run_gkp_qt(doc["eta"], s["n_s"], s["n_p"], p["d2"], gp, s["gkp"]["cutoff"])
    if protocol == "aqt":
        from vqt.baselines import run_aqt
        p = res["params"]
        s = doc["settings"]
        return run_aqt(doc["eta"], s["n_s"], s["n_p"], p["r_s"], p["nbar"], p["r_p"], s["aqt"]["cutoff"])
    raise MissingParamsError(f"{protocol} results carry no state parameters")


def input_states(doc: dict):
    """Single-mode input density matrices ``(rho_S, rho_P)`` rebuilt from a point document."""
    protocol = doc.get("protocol")
    res = doc.get("result") or {}
    if protocol in VARIATIONAL:
        if "params" not in res or "config" not in res:
            raise MissingParamsError("result file has no ansatz parameters")
        pc = ProtocolConfig.from_dict(res["config"])
        return Pipeline(pc).input_states(np.asarray(res["params"], float))
    if protocol == "gkp-qt":
        p = res.get("params") or {}
        if "weights" not in p:
            raise MissingParamsError("result file has no GKP parameters")
        s = doc["settings"]
        gp = GkpQtParams(tuple(p["weights"]), p["s_phi1"], p["s_r"], p["p_phi1"], p["p_r"], p["p_phi2"])
        opt, mw, _ = gkp_qt_states(gp, p["d2"], s["n_s"], s["n_p"], s["gkp"]["cutoff"])
    elif protocol == "aqt":
        p = res.get("params") or {}
        if "r_s" not in p:
            raise MissingParamsError("result file has no AQT parameters")
        opt, mw = aqt_states(doc["settings"]["n_s"], doc["settings"]["n_p"], p["r_s"], p["nbar"], p["r_p"],
                             doc["settings"]["aqt"]["cutoff"])
    else:
        raise MissingParamsError(f"{protocol} results carry no state parameters")
    ms = opt.reshape(-1, opt.shape[-1])
    rho_s = ms.T @ ms.conj()
    mp = mw.reshape(mw.shape[0], -1)
    rho_p = mp @ mp.conj().T
    return rho_s / np.trace(rho_s).real, rho_p / np.trace(rho_p).real
