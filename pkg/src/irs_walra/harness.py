"""Experiment configuration, end-to-end sweeps and result persistence.

Every random draw is keyed by (seed, purpose, index) so results do not
depend on how work is scheduled across threads.
"""

from __future__ import annotations

import csv
import logging
import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (
    ChannelProfile,
    OfdmConfig,
    autocorrelation,
    cascade,
    generate_bs_irs,
    generate_irs_rx,
    numerical_rank,
)
from .codebook import phases_to_values
from .errors import ConfigError, EmptyConditionCell
from .estimator import AUTO, WalraConfig, estimate_region, relative_error
from .measurement import FIDELITIES, measure_power, simulate_measurements
from .reflection import (
    benchmark_acsm,
    benchmark_csm,
    benchmark_rms,
    optimize_reflection,
    quadratic_gain,
)
from .serialize import dump, load

log = logging.getLogger(__name__)

__all__ = [
    "ScenarioConfig",
    "Scenario",
    "ExperimentResult",
    "preset",
    "build_scenario",
    "campaign_measurements",
    "run_estimation_sweep",
    "run_coverage_sweep",
    "emit_results",
    "METHODS",
]

METHODS = ("WALRA", "UB", "RMS", "CSM", "ACSM")
POLICIES = ("M", "TRUE-RANK", "AUTO")

# stream tags, see channel.STREAM_* for 0..2
STREAM_TRAINING = 10
STREAM_MEASURE = 11
STREAM_ACSM = 12


@dataclass
class ScenarioConfig:
    N: int = 16
    M: int = 32
    b: int = 2
    K0: object = 3
    T_p: list = field(default_factory=lambda: [32, 64, 96, 128, 192, 256])
    J: int = 8
    P0: float = 1.0
    sigma2: float = 1e-15
    rho: float = 10.0
    I: int = 20
    epsilon: float = 0.005
    D_policy: object = AUTO
    error_policies: list = field(default_factory=lambda: list(POLICIES))
    seeds: list = field(default_factory=lambda: list(range(10)))
    channel_profile: ChannelProfile = field(default_factory=ChannelProfile)
    eval_realizations: int = 100
    fidelity: str = "moment"
    methods: list = field(default_factory=lambda: list(METHODS))
    restarts: int = 16

    def __post_init__(self):
        if isinstance(self.channel_profile, dict):
            self.channel_profile = ChannelProfile.from_dict(self.channel_profile)
        self.T_p = [int(t) for t in self.T_p]
        self.seeds = [int(s) for s in self.seeds]

    @property
    def K0_list(self) -> list:
        return [int(k) for k in (self.K0 if isinstance(self.K0, (list, tuple)) else [self.K0])]

    @property
    def K(self) -> int:
        return max(self.K0_list) ** 2

    @property
    def ofdm(self) -> OfdmConfig:
        return OfdmConfig(self.M, self.P0, self.sigma2, self.b, self.N)

    def walra_config(self, D=AUTO) -> WalraConfig:
        return WalraConfig.for_bits(self.b, rho=self.rho, I=self.I, D=D, epsilon=self.epsilon)

    def validate(self) -> None:
        for name in ("N", "M", "b", "J", "I", "eval_realizations", "restarts"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(k < 1 for k in self.K0_list):
            raise ConfigError("K0 must be >= 1")
        if not self.T_p or any(t < 1 for t in self.T_p):
            raise ConfigError("T_p must be a non-empty list of positive counts")
        if any(b <= a for a, b in zip(self.T_p, self.T_p[1:])):
            raise ConfigError(f"T_p must be strictly increasing, got {self.T_p}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.P0 > 0 or self.sigma2 < 0 or not self.rho > 0 or not self.epsilon > 0:
            raise ConfigError("need P0 > 0, sigma2 >= 0, rho > 0, epsilon > 0")
        if self.fidelity not in FIDELITIES:
            raise ConfigError(f"fidelity must be one of {FIDELITIES}")
        if self.channel_profile.L > self.M:
            raise ConfigError(f"cascaded channel has L={self.channel_profile.L} taps but M={self.M}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        for p in [self.D_policy, *self.error_policies]:
            _check_policy(p)
        try:
            self.channel_profile.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["channel_profile"] = self.channel_profile.to_dict()
        d["T_p"] = list(self.T_p)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict, base: "ScenarioConfig | None" = None) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        if "channel_profile" in d and isinstance(d["channel_profile"], dict):
            start = (base.channel_profile if base else ChannelProfile()).to_dict()
            start.update(d["channel_profile"])
            try:
                d["channel_profile"] = ChannelProfile.from_dict(start)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        try:
            return replace(base, **d) if base is not None else cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _check_policy(p):
    if p in POLICIES:
        return
    if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 1:
        raise ConfigError(f"D policy must be one of {POLICIES} or a positive integer, got {p!r}")


def preset(name: str) -> ScenarioConfig:
    if name == "desk":
        return ScenarioConfig()
    if name == "paper":
        return ScenarioConfig(
            N=64,
            M=128,
            K0=[3, 9],
            T_p=list(range(100, 1001, 100)),
            eval_realizations=500,
            channel_profile=ChannelProfile(L_g=8, L_r=105),
        )
    raise ConfigError(f"unknown preset {name!r}; expected 'desk' or 'paper'")


@dataclass
class Scenario:
    """Channels of one seeded scenario."""

    seed: int
    H: list
    R: list
    R_eval: np.ndarray

    @property
    def K(self) -> int:
        return len(self.R)


def build_scenario(cfg: ScenarioConfig, seed: int, K: int | None = None, with_eval: bool = True) -> Scenario:
    K = cfg.K if K is None else K
    prof, N = cfg.channel_profile, cfg.N
    g = generate_bs_irs(seed, prof, N)
    H = [cascade(g, generate_irs_rx(seed, k, prof, N)).H for k in range(K)]
    R = [autocorrelation(h) for h in H]
    R_eval = None
    if with_eval:
        R_eval = sum(
            autocorrelation(cascade(g, generate_irs_rx(seed, j, prof, N, evaluation=True)))
            for j in range(cfg.eval_realizations)
        ) / cfg.eval_realizations
    return Scenario(seed, H, R, R_eval)


def campaign_measurements(cfg: ScenarioConfig, scenario: Scenario, T_p: int | None = None) -> list:
    """Measurement sets for every location under one shared training set.

    Draws ``max(cfg.T_p)`` reflections (or ``T_p``); shorter campaigns are
    prefixes of this one.
    """
    T = max(cfg.T_p) if T_p is None else T_p
    ofdm = cfg.ofdm
    seed = scenario.seed
    training = np.random.default_rng([seed, STREAM_TRAINING]).integers(0, 2**cfg.b, size=(T, cfg.N))
    sets = []
    for k in range(scenario.K):
        rng = np.random.default_rng([seed, STREAM_MEASURE, k])
        sets.append(
            simulate_measurements(k, training, ofdm, cfg.J, rng, R=scenario.R[k], H=scenario.H[k], mode=cfg.fidelity)
        )
    return sets


def _policy_D(policy, cfg, R_list):
    if policy == "AUTO":
        return AUTO, None
    if policy == "M":
        return min(cfg.M, cfg.N), None
    if policy == "TRUE-RANK":
        return 1, [max(1, numerical_rank(R)) for R in R_list]
    return int(policy), None


def estimate_campaign(cfg: ScenarioConfig, sets, policy, R_true=None, threads: int = 1):
    D, per_loc = _policy_D(policy, cfg, R_true)
    wcfg = cfg.walra_config(D)
    return estimate_region(sets, wcfg, threads=threads, D_per_location=per_loc)


@dataclass
class ExperimentResult:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, t_p, method, metric, value, seed):
        self.records.append(
            {"t_p": int(t_p), "method": str(method), "metric": str(metric), "value": float(value), "seed": seed}
        )

    def sorted_records(self) -> list:
        return sorted(self.records, key=lambda r: (r["t_p"], r["method"], r["metric"], str(r["seed"])))

    def values(self, method, metric, t_p=None, seed=None) -> list:
        return [
            r["value"]
            for r in self.sorted_records()
            if r["method"] == method and r["metric"] == metric
            and (t_p is None or r["t_p"] == t_p) and (seed is None or r["seed"] == seed)
        ]

    def value(self, method, metric, t_p):
        vals = self.values(method, metric, t_p, seed="all")
        if len(vals) != 1:
            raise KeyError((method, metric, t_p))
        return vals[0]

    def to_json(self) -> dict:
        return {"metadata": self.metadata, "records": self.sorted_records()}

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentResult":
        return cls(list(d["records"]), dict(d["metadata"]))


def _git_stamp():
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def _metadata(cfg, kind):
    return {"kind": kind, "config": cfg.to_dict(), "version": __version__, "git": _git_stamp()}


def _aggregate(result: ExperimentResult, metric: str):
    groups = {}
    for r in result.records:
        if r["metric"] == metric and r["seed"] != "all":
            groups.setdefault((r["t_p"], r["method"]), []).append(r["value"])
    for (t_p, method), vals in groups.items():
        vals = np.asarray(vals, dtype=float)
        ok = vals[np.isfinite(vals)]
        mean = float(ok.mean()) if ok.size else math.nan
        sem = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
        result.add(t_p, method, f"{metric}_mean", mean, "all")
        result.add(t_p, method, f"{metric}_sem", sem, "all")
        result.add(t_p, method, f"{metric}_count", ok.size, "all")


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _label(method, K0, multi):
    return f"{method}/K={K0 * K0}" if multi else method


def run_estimation_sweep(cfg: ScenarioConfig, threads: int = 1) -> ExperimentResult:
    """Mean relative estimation error per (T_p, D policy), over seeds."""
    cfg.validate()
    multi = len(cfg.K0_list) > 1

    def one_seed(seed):
        t0 = time.perf_counter()
        sc = build_scenario(cfg, seed, with_eval=False)
        sets = campaign_measurements(cfg, sc)
        targets = [R.real if cfg.b == 1 else R for R in sc.R]
        rows = []
        for K0 in cfg.K0_list:
            K = K0 * K0
            for T_p in cfg.T_p:
                sub = [s.head(T_p) for s in sets[:K]]
                for policy in cfg.error_policies:
                    est, _ = estimate_campaign(cfg, sub, policy, sc.R[:K])
                    errs = [relative_error(e.R_raw, targets[i]) for i, e in enumerate(est)]
                    label = _label(f"D={policy}", K0, multi)
                    rows.append((T_p, label, "error", float(np.mean(errs)), seed))
                    if policy == "AUTO":
                        rows.append((T_p, label, "d_stop", float(np.mean([e.D for e in est])), seed))
        return rows, time.perf_counter() - t0

    result = ExperimentResult(metadata=_metadata(cfg, "estimation"))
    timings = {}
    for seed, (rows, dt) in zip(cfg.seeds, _map(one_seed, cfg.seeds, threads)):
        for row in rows:
            result.add(*row)
        timings[str(seed)] = dt
    _aggregate(result, "error")
    _aggregate(result, "d_stop")
    result.metadata["wall_time_s"] = timings
    return result


def _acsm_measure(cfg, sc, K, T_p):
    rng = np.random.default_rng([sc.seed, STREAM_ACSM, T_p])
    ofdm = cfg.ofdm

    def measure(block):
        V = phases_to_values(block, cfg.b)
        return np.stack(
            [measure_power(sc.R[k], V, ofdm, cfg.J, rng, mode=cfg.fidelity, H=sc.H[k]) for k in range(K)]
        )

    return measure


def run_coverage_sweep(cfg: ScenarioConfig, methods=None, threads: int = 1) -> ExperimentResult:
    """Average channel power gain of each method versus T_p, over seeds."""
    cfg.validate()
    methods = list(cfg.methods if methods is None else methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}")
    multi = len(cfg.K0_list) > 1

    def one_seed(seed):
        t0 = time.perf_counter()
        sc = build_scenario(cfg, seed)
        sets = campaign_measurements(cfg, sc)
        gain = lambda v: quadratic_gain(sc.R_eval, v.value())
        rows = []
        ub = optimize_reflection(sc.R_eval, cfg.b, cfg.restarts, seed) if "UB" in methods else None
        for K0 in cfg.K0_list:
            K = K0 * K0
            q_all = np.stack([s.q for s in sets[:K]])
            for T_p in cfg.T_p:
                sub = [s.head(T_p) for s in sets[:K]]
                training = sub[0].training
                q = q_all[:, :T_p]
                for method in methods:
                    if method == "UB":
                        v = ub.v_opt
                    elif method == "WALRA":
                        _, R_hat = estimate_campaign(cfg, sub, cfg.D_policy, sc.R[:K])
                        v = optimize_reflection(R_hat, cfg.b, cfg.restarts, seed).v_opt
                    elif method == "RMS":
                        v = benchmark_rms(q, training, cfg.b)
                    else:
                        try:
                            if method == "CSM":
                                v = benchmark_csm(q, training, cfg.b)
                            else:
                                v = benchmark_acsm(
                                    q, training, cfg.b, measure=_acsm_measure(cfg, sc, K, T_p), seed=[seed, T_p]
                                ).v_opt
                        except EmptyConditionCell as exc:
                            log.warning("seed %s, T_p=%s, %s: %s", seed, T_p, method, exc)
                            rows.append((T_p, _label(method, K0, multi), "gain", math.nan, seed))
                            continue
                    rows.append((T_p, _label(method, K0, multi), "gain", gain(v), seed))
        return rows, time.perf_counter() - t0

    result = ExperimentResult(metadata=_metadata(cfg, "coverage"))
    result.metadata["methods"] = methods
    timings = {}
    for seed, (rows, dt) in zip(cfg.seeds, _map(one_seed, cfg.seeds, threads)):
        for row in rows:
            result.add(*row)
        timings[str(seed)] = dt
    _aggregate(result, "gain")
    result.metadata["wall_time_s"] = timings
    return result


CSV_COLUMNS = ("t_p", "method", "metric", "value", "seed")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_results(result: ExperimentResult, path, fmt: str = "CSV") -> Path:
    """Write the records as CSV (plus a JSON sidecar) or as JSON.

    Returns the path of the JSON document written.
    """
    path = Path(path)
    fmt = fmt.upper()
    if fmt == "JSON":
        dump(result.to_json(), path)
        return path
    if fmt != "CSV":
        raise ValueError(f"unknown format {fmt!r}")
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in result.sorted_records():
                w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    sidecar = path.with_suffix(".json")
    dump(result.to_json(), sidecar)
    return sidecar


def load_results(path) -> ExperimentResult:
    return ExperimentResult.from_json(load(path))
