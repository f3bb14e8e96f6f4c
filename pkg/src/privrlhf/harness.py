"""Seeded sweeps, CSV emission and slope fitting.

Configuration lives in an INI-style file with sections ``[instance]``,
``[privacy]``, ``[offline]``, ``[online]`` and ``[sweep]``. Every job is a
(cell, seed) pair that owns its random stream; results are merged in
lexicographic (cell, seed) order, so thread count never changes outputs.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .core import Instance, PrivacyParams, dumps_instance, load_instance, make_rng, rr_alpha, suboptimality
from .instances import HardInstanceSpec, hard_instance, offline_dataset_gen, random_instance, theory_gap
from .offline import BonusMode, OfflineParams, calibrate_multiplier, ppkl_run
from .online import OnlineParams, RunTrace, gamma_T, pokl_run, write_trace

MODES = ("offline", "online", "invariants", "gen-instance")


class ConfigError(ValueError):
    """Invalid sweep configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstanceConfig:
    """How to build the instance for a sweep cell.

    For ``kind="hard"`` with ``a=None`` the gap follows the theory-matched
    value for the cell's sample size, computed at ``a_epsilon`` (or at the
    cell's epsilon when that is ``None``). Online sweeps need a fixed ``a``.
    """

    kind: str = "hard"
    S: int = 4
    A: int = 2
    C: float = 4.0
    a: float | None = None
    a_epsilon: float | None = 1.0
    beta: float = 1.0
    B: float = 2.0
    v: tuple[int, ...] | None = None
    shift_to_range: bool = True
    class_size: int = 16
    seed: int = 0
    path: str | None = None

    def build(self, n: int | None = None, epsilon: float | None = None) -> Instance:
        if self.kind == "file":
            if not self.path:
                raise ConfigError("instance kind 'file' needs a path")
            return load_instance(self.path)
        if self.kind == "random":
            return random_instance(self.S, self.A, self.class_size, self.B, self.beta, make_rng(self.seed))
        if self.kind != "hard":
            raise ConfigError(f"unknown instance kind {self.kind!r}")
        a = self.a
        if a is None:
            ref_eps = self.a_epsilon if self.a_epsilon is not None else epsilon
            if n is None or ref_eps is None:
                raise ConfigError("theory-matched gap needs a sample size and an epsilon")
            a = theory_gap(self.S, self.C, ref_eps, n)
        v = self.v if self.v is not None else tuple((-1) ** k for k in range(self.S))
        try:
            spec = HardInstanceSpec(
                S=self.S, C=self.C, a=a, beta=self.beta, B=self.B, v=v,
                shift_to_range=self.shift_to_range, seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid hard instance: {exc}") from exc
        return hard_instance(spec)


@dataclass(frozen=True)
class OnlineConfig:
    delta: float = 0.1
    lam: float | None = None
    gamma_scale: float = 1.0
    use_confidence_set: bool = True

    def params(self, T: int) -> OnlineParams:
        return OnlineParams(
            T=T, delta=self.delta, lam=self.lam, gamma_scale=self.gamma_scale,
            use_confidence_set=self.use_confidence_set,
        )


@dataclass(frozen=True)
class SweepConfig:
    mode: str
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    epsilons: tuple[float, ...] = (1.0,)
    n_values: tuple[int, ...] = ()
    T_values: tuple[int, ...] = ()
    seeds: tuple[int, ...] = (0,)
    offline: OfflineParams = field(default_factory=OfflineParams)
    online: OnlineConfig = field(default_factory=OnlineConfig)
    checkpoints: tuple[int, ...] = ()
    out_dir: str = "out"
    threads: int = 1
    quick: bool = False

    def __post_init__(self):
        validate_config(self)

    def replace(self, **changes) -> "SweepConfig":
        return dataclasses.replace(self, **changes)

    def canonical(self) -> dict:
        """Config content that determines outputs (excludes out_dir and threads)."""
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        d.pop("threads")
        d["offline"]["bonus_mode"] = self.offline.bonus_mode.value
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def seed_range(self) -> str:
        return f"{min(self.seeds)}..{max(self.seeds)}"


def validate_config(cfg: SweepConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"unknown mode {cfg.mode!r}; expected one of {MODES}")
    for eps in cfg.epsilons:
        if not eps > 0:
            raise ConfigError(f"epsilon must be positive, got {eps}")
    for name, d in (("offline", cfg.offline.delta), ("online", cfg.online.delta)):
        if not 0 < d < 1:
            raise ConfigError(f"{name} delta must lie in (0, 1), got {d}")
    if len(set(cfg.seeds)) != len(cfg.seeds) or not cfg.seeds:
        raise ConfigError("seeds must be a nonempty list of distinct integers")
    if cfg.mode == "offline" and not (cfg.n_values and cfg.epsilons):
        raise ConfigError("offline sweeps need nonempty n and epsilon grids")
    if cfg.mode == "online":
        if not (cfg.T_values and cfg.epsilons):
            raise ConfigError("online sweeps need nonempty T and epsilon grids")
        if cfg.instance.kind == "hard" and cfg.instance.a is None:
            raise ConfigError("online sweeps on the hard instance need a fixed gap 'a'")
        if cfg.online.lam is not None:
            N_F = _class_size(cfg.instance)
            for T in cfg.T_values:
                for eps in cfg.epsilons:
                    g = gamma_T(cfg.instance.B, T, N_F, cfg.online.delta, rr_alpha(eps), cfg.online.gamma_scale)
                    if cfg.online.lam > 0.5 * g * g:
                        raise ConfigError(
                            f"lambda={cfg.online.lam} exceeds Gamma_T^2/2={0.5 * g * g} at T={T}, epsilon={eps}"
                        )
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")


def _class_size(ic: InstanceConfig) -> int:
    if ic.kind == "hard":
        return 2**ic.S if ic.S <= 6 else 16
    if ic.kind == "random":
        return ic.class_size
    return len(load_instance(ic.path).fclass)


def _parse_list(text: str, conv=float) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(conv(x.strip()) for x in text.split(","))


def parse_seeds(text: str) -> tuple[int, ...]:
    """``'0..19'`` (inclusive) or a comma list."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ConfigError(f"empty seed range {text!r}")
        return tuple(range(lo, hi + 1))
    return _parse_list(text, int)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    t = text.strip().lower()
    return None if t in ("", "none", "theory", "auto") else float(t)


def load_config(path, mode: str | None = None) -> SweepConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config {path}")
    return config_from_parser(parser, mode)


def config_from_text(text: str, mode: str | None = None) -> SweepConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read_string(text)
    return config_from_parser(parser, mode)


def config_from_parser(parser: configparser.ConfigParser, mode: str | None = None) -> SweepConfig:
    try:
        sec = {name: dict(parser[name]) if parser.has_section(name) else {} for name in
               ("instance", "privacy", "offline", "online", "sweep")}
        inst = sec["instance"]
        ic = InstanceConfig(
            kind=inst.get("kind", "hard"),
            S=int(inst.get("s", 4)),
            A=int(inst.get("a_count", 2)),
            C=float(inst.get("c", 4.0)),
            a=_opt_float(inst.get("a", "")),
            a_epsilon=_opt_float(inst.get("a_epsilon", "1.0")),
            beta=float(inst.get("beta", 1.0)),
            B=float(inst.get("b", 2.0)),
            v=_parse_list(inst["v"], int) if "v" in inst else None,
            shift_to_range=_bool(inst.get("shift_to_range", "true")),
            class_size=int(inst.get("class_size", 16)),
            seed=int(inst.get("seed", 0)),
            path=inst.get("path"),
        )
        off = sec["offline"]
        op = OfflineParams(
            delta=float(off.get("delta", 0.1)),
            c_bonus=float(off.get("c_bonus", 16.0)),
            bonus_mode=off.get("bonus_mode", "theory"),
            calibration_replays=int(off.get("calibration_replays", 200)),
            calibration_seed=int(off.get("calibration_seed", 20_240_601)),
        )
        on = sec["online"]
        oc = OnlineConfig(
            delta=float(on.get("delta", 0.1)),
            lam=_opt_float(on.get("lambda", "")),
            gamma_scale=float(on.get("gamma_scale", 1.0)),
            use_confidence_set=_bool(on.get("use_confidence_set", "true")),
        )
        sw = sec["sweep"]
        return SweepConfig(
            mode=mode or sw.get("mode", "offline"),
            instance=ic,
            epsilons=_parse_list(sec["privacy"].get("epsilon", "1.0")),
            n_values=_parse_list(sw.get("n", ""), int),
            T_values=_parse_list(sw.get("t", ""), int),
            seeds=parse_seeds(sw.get("seeds", "0")),
            offline=op,
            online=oc,
            checkpoints=_parse_list(sw.get("checkpoints", ""), int),
            out_dir=sw.get("out", "out"),
            threads=int(sw.get("threads", 1)),
            quick=_bool(sw.get("quick", "false")),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


SUMMARY_COLUMNS = ("mode", "x", "epsilon", "replays", "mean", "median", "std")
SLOPE_COLUMNS = ("epsilon", "slope", "stderr", "points")
CHECKPOINT_COLUMNS = ("T", "epsilon", "t", "mean_regret", "regret_over_log_t")
PLOT_COLUMNS = ("epsilon", "x", "y", "err")
OFFLINE_RUN_COLUMNS = ("n", "epsilon", "seed", "suboptimality", "rbar_index", "multiplier")


@dataclass
class SweepSummary:
    mode: str
    cells: list[dict] = field(default_factory=list)
    slopes: list[dict] = field(default_factory=list)
    checkpoints: list[dict] = field(default_factory=list)
    runs: list[dict] = field(default_factory=list)


def fit_loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of log y on log x and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points to fit a slope")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    if x.size == 2:
        lx, ly = np.log(x), np.log(y)
        return float((ly[1] - ly[0]) / (lx[1] - lx[0])), float("nan")
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.stderr)


def _cell_stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "replays": int(v.size),
        "mean": float(v.mean()),
        "median": float(np.median(v)),
        "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
    }


def summarize_offline(records: list[dict]) -> SweepSummary:
    """Aggregate per-run records with keys n, epsilon, seed, suboptimality."""
    summary = SweepSummary(mode="offline", runs=list(records))
    cells: dict[tuple, list] = {}
    for rec in records:
        cells.setdefault((rec["n"], rec["epsilon"]), []).append(rec["suboptimality"])
    for (n, eps) in sorted(cells):
        summary.cells.append({"mode": "offline", "x": n, "epsilon": eps, **_cell_stats(cells[(n, eps)])})
    for eps in sorted({e for _, e in cells}):
        rows = [c for c in summary.cells if c["epsilon"] == eps]
        if len(rows) >= 2:
            xs = [c["x"] for c in rows]
            ys = [c["mean"] for c in rows]
            if min(ys) > 0:
                slope, se = fit_loglog_slope(xs, ys)
                summary.slopes.append({"epsilon": eps, "slope": slope, "stderr": se, "points": len(rows)})
    return summary


def summarize_online(curves: dict[tuple, list[np.ndarray]], checkpoints=()) -> SweepSummary:
    """Aggregate per-round regret curves keyed by (T, epsilon)."""
    summary = SweepSummary(mode="online")
    for (T, eps) in sorted(curves):
        cum = np.array([np.cumsum(c) for c in curves[(T, eps)]])
        summary.cells.append({"mode": "online", "x": T, "epsilon": eps, **_cell_stats(cum[:, -1])})
        mean_cum = cum.mean(axis=0)
        for h in sorted(set(checkpoints) | {T}):
            if 2 <= h <= T:
                summary.checkpoints.append({
                    "T": T, "epsilon": eps, "t": h,
                    "mean_regret": float(mean_cum[h - 1]),
                    "regret_over_log_t": float(mean_cum[h - 1] / math.log(h)),
                })
    for eps in sorted({e for _, e in curves}):
        rows = [c for c in summary.cells if c["epsilon"] == eps]
        if len(rows) >= 2 and min(c["mean"] for c in rows) > 0:
            slope, se = fit_loglog_slope([c["x"] for c in rows], [c["mean"] for c in rows])
            summary.slopes.append({"epsilon": eps, "slope": slope, "stderr": se, "points": len(rows)})
    return summary


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _job_seed(kind: str, cell: tuple, seed: int) -> np.random.SeedSequence:
    # stable 32-bit words derived from the cell so streams differ across cells
    words = [int(h, 16) for h in _chunks(hashlib.sha256(repr((kind, cell)).encode()).hexdigest()[:16], 8)]
    return np.random.SeedSequence([seed, *words])


def _chunks(s: str, k: int):
    return [s[i:i + k] for i in range(0, len(s), k)]


def _pmap(fn, jobs, threads: int):
    if threads <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def run_offline_sweep(cfg: SweepConfig) -> SweepSummary:
    if cfg.mode != "offline":
        raise ConfigError("run_offline_sweep needs mode = offline")
    cells = sorted((n, eps) for n in cfg.n_values for eps in cfg.epsilons)
    prepared = {}
    for n, eps in cells:
        inst = cfg.instance.build(n=n, epsilon=eps)
        pp = PrivacyParams(eps)
        params = cfg.offline
        if params.bonus_mode is BonusMode.CALIBRATED and params.multiplier is None:
            m = calibrate_multiplier(inst, n, pp, params)
            params = dataclasses.replace(params, multiplier=m)
        prepared[(n, eps)] = (inst, pp, params)

    def job(key):
        (n, eps), seed = key
        inst, pp, params = prepared[(n, eps)]
        rng = make_rng(_job_seed("offline", (n, eps), seed))
        data = offline_dataset_gen(inst, n, pp, rng)
        res = ppkl_run(inst, data, pp, params)
        return {
            "n": n, "epsilon": eps, "seed": seed,
            "suboptimality": suboptimality(res.pi_hat, inst),
            "rbar_index": res.r_bar_index, "multiplier": res.multiplier,
        }

    jobs = [(cell, seed) for cell in cells for seed in sorted(cfg.seeds)]
    return summarize_offline(_pmap(job, jobs, cfg.threads))


def run_online_sweep(cfg: SweepConfig, keep_traces: bool = True) -> tuple[SweepSummary, list]:
    """Returns the summary and ``[(T, epsilon, seed, RunTrace), ...]``."""
    if cfg.mode != "online":
        raise ConfigError("run_online_sweep needs mode = online")
    inst = cfg.instance.build()
    cells = sorted((T, eps) for T in cfg.T_values for eps in cfg.epsilons)

    def job(key):
        (T, eps), seed = key
        trace = pokl_run(
            inst, PrivacyParams(eps), cfg.online.params(T), _job_seed("online", (T, eps), seed),
            record_policies=False,
        )
        return T, eps, seed, trace

    jobs = [(cell, seed) for cell in cells for seed in sorted(cfg.seeds)]
    results = _pmap(job, jobs, cfg.threads)
    curves: dict[tuple, list] = {}
    for T, eps, _, trace in results:
        curves.setdefault((T, eps), []).append(trace.regret_pi2)
    summary = summarize_online(curves, cfg.checkpoints)
    return summary, (results if keep_traces else [])


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _write_csv(path: Path, columns, rows, footer: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
        f.write(footer)


def footer_line(cfg: SweepConfig) -> str:
    return f"# config_hash={cfg.config_hash()} seeds={cfg.seed_range()}\n"


def emit_outputs(summary: SweepSummary, traces, out_dir, cfg: SweepConfig) -> list[Path]:
    """Write summary, slope, checkpoint, per-run and plot-ready CSV files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    foot = footer_line(cfg)
    written = []

    def emit(name, columns, rows):
        p = out / name
        _write_csv(p, columns, rows, foot)
        written.append(p)

    emit("summary.csv", SUMMARY_COLUMNS, summary.cells)
    emit("slopes.csv", SLOPE_COLUMNS, summary.slopes)
    plot_rows = [
        {"epsilon": c["epsilon"], "x": c["x"], "y": c["mean"],
         "err": c["std"] / math.sqrt(c["replays"]) if c["replays"] else 0.0}
        for c in summary.cells
    ]
    emit(f"plot_{summary.mode}.csv", PLOT_COLUMNS, plot_rows)
    if summary.mode == "offline":
        emit("runs.csv", OFFLINE_RUN_COLUMNS, summary.runs)
    else:
        emit("checkpoints.csv", CHECKPOINT_COLUMNS, summary.checkpoints)
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for T, eps, seed, trace in traces:
            p = tdir / f"trace_T{T}_eps{_fmt(eps)}_seed{seed}.csv"
            write_trace(p, trace, seed)
            with open(p, "a", encoding="utf-8", newline="\n") as f:
                f.write(foot)
            written.append(p)
        if traces:
            curve_rows = []
            by_cell: dict[tuple, list] = {}
            for T, eps, _, trace in traces:
                by_cell.setdefault((T, eps), []).append(np.cumsum(trace.regret_pi2))
            for (T, eps) in sorted(by_cell):
                cum = np.array(by_cell[(T, eps)])
                m = cum.mean(axis=0)
                e = cum.std(axis=0, ddof=1) / math.sqrt(len(cum)) if len(cum) > 1 else np.zeros(T)
                for t in range(T):
                    curve_rows.append({"T": T, "epsilon": eps, "t": t + 1, "y": m[t], "err": e[t]})
            emit("plot_regret_curves.csv", ("T", "epsilon", "t", "y", "err"), curve_rows)
    return written


def read_csv_rows(path) -> list[dict]:
    """Read an emitted CSV, skipping ``#`` footer lines; numbers come back as numbers."""
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        rows.append({k: _parse_cell(v) for k, v in rec.items()})
    return rows


def _parse_cell(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return {"true": True, "false": False}.get(v, v)


def write_instance_file(inst: Instance, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "instance.json"
    p.write_text(dumps_instance(inst), encoding="utf-8")
    return p


__all__ = [
    "CHECKPOINT_COLUMNS",
    "ConfigError",
    "InstanceConfig",
    "OnlineConfig",
    "SUMMARY_COLUMNS",
    "SweepConfig",
    "SweepSummary",
    "config_from_text",
    "emit_outputs",
    "fit_loglog_slope",
    "load_config",
    "parse_seeds",
    "read_csv_rows",
    "run_offline_sweep",
    "run_online_sweep",
    "summarize_offline",
    "summarize_online",
    "validate_config",
]
