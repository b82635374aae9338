"""Experiment orchestration: configs, seeded sweeps, calibration, scaling reports.

A run is fully determined by (config, master seed): every trial derives its
random streams from a per-(cell, trial) seed sequence, instance draws included,
so re-running any single trial in isolation reproduces it.  Persisted artifacts
(CSV rows, JSON summaries) contain only deterministic fields.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import identity, infer, public_uniformity as pu, testers
from .dist import Pmf, PaninskiParam, flying_pony, paninski, uniform
from .simulate import simulate_many
from .smp import PublicCoins, Verdict, trial_seed_seq

__all__ = [
    "ExperimentConfig",
    "TrialReport",
    "ExperimentResult",
    "run_experiment",
    "calibrate",
    "scaling_report",
    "wilson_interval",
    "PROTOCOLS",
    "make_instance",
]

SCHEMA_VERSION = 1
N_CAP = 50_000_000


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    from scipy.stats import norm

    z = float(norm.ppf(0.5 + confidence / 2.0))
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1.0 + z**2 / trials
    center = (phat + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z**2 / (4 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


def make_instance(spec: dict, k: int, eps: float, rng: np.random.Generator) -> tuple[Pmf, str]:
    """Build the trial's distribution; returns (pmf, expected verdict).

    spec["name"] in {uniform, paninski, flying_pony, pmf_file}; paninski /
    flying_pony theta is "alternating", "ones", their "neg-" negations, or
    "random" (drawn from the trial stream).
    """
    name = spec.get("name", "uniform")
    if name == "uniform":
        return uniform(k), "accept_uniform"
    theta_kind = spec.get("theta", "random")
    if theta_kind == "alternating":
        theta = np.resize([1, -1], k // 2)
    elif theta_kind == "neg-alternating":
        theta = np.resize([-1, 1], k // 2)
    elif theta_kind == "ones":
        theta = np.ones(k // 2, dtype=np.int64)
    elif theta_kind == "neg-ones":
        theta = -np.ones(k // 2, dtype=np.int64)
    elif theta_kind == "random":
        theta = np.where(rng.random(k // 2) < 0.5, 1, -1)
    else:
        raise KeyError(f"unknown theta kind {theta_kind!r}")
    if name == "paninski":
        return paninski(PaninskiParam(k=k, eps=eps, theta=theta)), "reject"
    if name == "flying_pony":
        return flying_pony(k, theta), "reject"
    if name == "pmf_file":
        with open(spec["path"]) as fh:
            p = Pmf.from_json(fh.read())
        return p, spec.get("expected", "reject")
    raise KeyError(f"unknown instance {name!r}")


# ---------------------------------------------------------------------------
# Protocol adapters
# ---------------------------------------------------------------------------


def _levin_constants(constants: dict | None) -> pu.LevinConstants:
    if constants and "levin" in constants:
        return pu.LevinConstants.from_dict(constants["levin"])
    return pu.DEFAULT_LEVIN_CONSTANTS


def _run_smooth(p, cell, seed_seq, coins, constants):
    rng = np.random.default_rng(seed_seq)
    kwargs = {}
    if constants:
        kwargs["c_l2"] = constants.get("c_l2", testers.C_L2_DEFAULT)
        kwargs["m"] = constants.get("smooth_m", 12)
    n = cell.get("n") or pu.SmoothSchedule.from_params(
        cell["k"], cell["ell"], cell["eps"], m=kwargs.get("m", 12), c_l2=kwargs.get("c_l2", testers.C_L2_DEFAULT)
    ).total_players
    return pu.smooth_protocol(p, cell["ell"], cell["eps"], n, coins, rng, **kwargs)


def _run_levin(p, cell, seed_seq, coins, constants):
    rng = np.random.default_rng(seed_seq)
    const = _levin_constants(constants)
    sched = pu.LevinSchedule.from_params(cell["k"], cell["ell"], cell["eps"], const)
    scale = (cell["n"] / sched.total_players) if cell.get("n") else 1.0
    return pu.levin_protocol(p, cell["ell"], cell["eps"], coins, rng, constants=const, scale=scale)


def _run_warmup(p, cell, seed_seq, coins, constants):
    rng = np.random.default_rng(seed_seq)
    c = (constants or {}).get("warmup_c", 13.0)
    k, eps = cell["k"], cell["eps"]
    m = math.ceil(5.0 / eps)
    n = cell.get("n") or m * math.ceil(c * k * math.log(10.0 * m) / eps**2)
    return pu.warmup_protocol(p, eps, n, coins, rng, c=c)


def _run_private_si(p, cell, seed_seq, coins, constants):
    rng = np.random.default_rng(seed_seq)
    c = (constants or {}).get("c_uniformity", testers.C_UNIFORMITY_DEFAULT)
    n = cell.get("n") or infer.si_uniformity_players(cell["k"], cell["ell"], cell["eps"], c=c)
    return infer.si_uniformity_protocol(p, cell["ell"], cell["eps"], n, rng, c=c)


def _run_flying_pony(p, cell, seed_seq, coins, constants):
    rng = np.random.default_rng(seed_seq)
    n = cell.get("n") or infer.FLYING_PONY_C * cell["k"]
    return infer.flying_pony_protocol(p, n, rng)


def _run_simulate(p, cell, seed_seq, coins, constants):
    rng = np.random.default_rng(seed_seq)
    out = simulate_many(p, cell["ell"], 1, rng)[0]
    return Verdict(
        decision="symbol",
        symbol=out.symbol,
        diagnostics={"players_used": out.players_used, "batches_used": out.batches_used},
    )


def _run_dummy_const(p, cell, seed_seq, coins, constants):
    # Control protocol for the scaling report: correct iff n >= a fixed constant.
    n = cell.get("n") or 500
    expect = "accept_uniform" if float(np.max(p.probs) - np.min(p.probs)) < 1e-12 else "reject"
    wrong = "reject" if expect == "accept_uniform" else "accept_uniform"
    return Verdict(decision=expect if n >= 500 else wrong, diagnostics={"players_used": n})


PROTOCOLS = {
    "smooth": _run_smooth,
    "levin": _run_levin,
    "warmup": _run_warmup,
    "private-si": _run_private_si,
    "flying-pony": _run_flying_pony,
    "simulate": _run_simulate,
    "dummy-const": _run_dummy_const,
}


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    instance: dict
    grid: tuple[dict, ...]
    trials: int
    master_seed: int
    constants: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.grid:
            raise KeyError("grid must be non-empty")
        if self.trials < 1:
            raise KeyError("trials must be >= 1")
        if self.protocol not in PROTOCOLS:
            raise KeyError(f"unknown protocol {self.protocol!r}")
        object.__setattr__(self, "grid", tuple(dict(c) for c in self.grid))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        obj = json.loads(text)
        if obj.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise KeyError(f"unsupported schema_version {obj.get('schema_version')!r}")
        return cls(
            protocol=obj["protocol"],
            instance=obj.get("instance", {"name": "uniform"}),
            grid=tuple(obj["grid"]),
            trials=int(obj["trials"]),
            master_seed=int(obj.get("master_seed", 0)),
            constants=obj.get("constants"),
        )


@dataclass(frozen=True)
class TrialReport:
    cell: int
    trial: int
    k: int
    ell: int
    eps: float
    n: int
    seed: str
    decision: str
    expected: str
    correct: bool
    players_used: int
    public_bits: int
    wall_time_s: float = 0.0  # diagnostic only; never persisted

    CSV_FIELDS = (
        "cell", "trial", "k", "ell", "eps", "n", "seed",
        "decision", "expected", "correct", "players_used", "public_bits",
    )

    def csv_row(self) -> list:
        d = asdict(self)
        return [d[f] for f in self.CSV_FIELDS]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list[TrialReport]
    summaries: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TrialReport.CSV_FIELDS)
        for r in self.reports:
            w.writerow(r.csv_row())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "protocol": self.config.protocol,
                "master_seed": self.config.master_seed,
                "summaries": self.summaries,
            },
            indent=2,
            sort_keys=True,
        )


def run_trial(cfg: ExperimentConfig, cell_index: int, trial_index: int) -> TrialReport:
    cell = cfg.grid[cell_index]
    ss = trial_seed_seq(cfg.master_seed, cell_index, trial_index)
    children = ss.spawn(3)  # instance stream, protocol stream, public coins
    inst_rng = np.random.default_rng(children[0])
    p, expected = make_instance(cfg.instance, cell["k"], cell.get("eps", 0.0), inst_rng)
    coins = PublicCoins(children[2])
    t0 = time.perf_counter()
    verdict = PROTOCOLS[cfg.protocol](p, cell, children[1], coins, cfg.constants)
    wall = time.perf_counter() - t0
    if cfg.protocol == "simulate":
        correct = verdict.decision == "symbol"
        expected = "symbol"
    else:
        correct = verdict.decision == expected
    return TrialReport(
        cell=cell_index,
        trial=trial_index,
        k=cell["k"],
        ell=cell.get("ell", 1),
        eps=cell.get("eps", 0.0),
        n=cell.get("n") or verdict.diagnostics.get("players_used", 0),
        seed=f"{cfg.master_seed}/{cell_index}/{trial_index}",
        decision=verdict.decision,
        expected=expected,
        correct=bool(correct),
        players_used=int(verdict.diagnostics.get("players_used", 0)),
        public_bits=int(verdict.diagnostics.get("public_bits", 0)),
        wall_time_s=wall,
    )


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    coords = [(ci, ti) for ci in range(len(cfg.grid)) for ti in range(cfg.trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_trial_worker, [(cfg, ci, ti) for ci, ti in coords], chunksize=8))
    else:
        reports = [run_trial(cfg, ci, ti) for ci, ti in coords]
    reports.sort(key=lambda r: (r.cell, r.trial))
    summaries = []
    for ci, cell in enumerate(cfg.grid):
        cell_reports = [r for r in reports if r.cell == ci]
        successes = sum(r.correct for r in cell_reports)
        lo, hi = wilson_interval(successes, len(cell_reports))
        summaries.append(
            {
                "cell": ci,
                **{key: cell[key] for key in sorted(cell)},
                "trials": len(cell_reports),
                "success_rate": successes / len(cell_reports),
                "wilson_low": lo,
                "wilson_high": hi,
                "mean_players": sum(r.players_used for r in cell_reports) / len(cell_reports),
                "mean_public_bits": sum(r.public_bits for r in cell_reports) / len(cell_reports),
            }
        )
    return ExperimentResult(config=cfg, reports=reports, summaries=summaries)


def _trial_worker(args):
    cfg, ci, ti = args
    return run_trial(cfg, ci, ti)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


class CalibrationFailure(RuntimeError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


def _two_sided_error(protocol: str, cell: dict, constants: dict | None, trials: int, seed: int) -> float:
    """Max over sides of the error rate on (uniform, paninski) at this cell."""
    errs = []
    for side, inst in ((0, {"name": "uniform"}), (1, {"name": "paninski", "theta": "random"})):
        cfg = ExperimentConfig(
            protocol=protocol,
            instance=inst,
            grid=(cell,),
            trials=trials,
            master_seed=seed * 2 + side,
            constants=constants,
        )
        res = run_experiment(cfg)
        errs.append(1.0 - res.summaries[0]["success_rate"])
    return max(errs)


# Per-protocol calibration ladders: (constants-key, candidate values smallest first).
_CAL_LADDERS = {
    "smooth": ("c_l2", [1.0 * 1.5**i for i in range(8)]),
    "levin": ("levin_scale", [0.25 * 1.4**i for i in range(10)]),
    "private-si": ("c_uniformity", [0.75 * 1.5**i for i in range(8)]),
    "warmup": ("warmup_c", [2.0 * 1.5**i for i in range(8)]),
}


def calibrate(
    protocol: str,
    target_error: float,
    grid: list[dict],
    budget: int,
    master_seed: int = 0,
) -> dict:
    """Smallest ladder constant meeting the target two-sided error on every cell.

    budget is trials per candidate per cell side; the result dict is a
    constants file payload with provenance metadata.
    """
    if target_error <= 0:
        raise CalibrationFailure("target error must be positive (zero error is unattainable)", None)
    if budget < 100:
        raise KeyError("budget must be >= 100 trials per candidate")
    if protocol not in _CAL_LADDERS:
        raise KeyError(f"no calibration ladder for protocol {protocol!r}")
    key, ladder = _CAL_LADDERS[protocol]
    best = None
    for value in ladder:
        if key == "levin_scale":
            base = pu.DEFAULT_LEVIN_CONSTANTS
            constants = {
                "levin": pu.LevinConstants(
                    c_m=base.c_m, c1=base.c1 * value, c2=base.c2 * value, c3=base.c3 * value, z=base.z
                ).to_dict()
            }
        else:
            constants = {key: value}
        worst = max(
            _two_sided_error(protocol, cell, constants, budget, master_seed) for cell in grid
        )
        if best is None or worst < best["measured_error"]:
            best = {"constant": value, "measured_error": worst}
        if worst <= target_error:
            return {
                "protocol": protocol,
                "constant_key": key,
                "constant": value,
                "constants": constants,
                "measured_error": worst,
                "target_error": target_error,
                "grid": grid,
                "budget": budget,
                "master_seed": master_seed,
                "date": time.strftime("%Y-%m-%d"),
            }
    raise CalibrationFailure(
        f"no ladder value met target {target_error}; best {best}", best
    )


# ---------------------------------------------------------------------------
# Scaling report
# ---------------------------------------------------------------------------


def _success_rate_at(protocol: str, k: int, ell: int, eps: float, n: int, trials: int, seed: int, constants=None) -> float:
    cell = {"k": k, "ell": ell, "eps": eps, "n": n}
    correct = 0
    for side, inst in ((0, {"name": "uniform"}), (1, {"name": "paninski", "theta": "random"})):
        cfg = ExperimentConfig(
            protocol=protocol, instance=inst, grid=(cell,), trials=trials // 2,
            master_seed=seed * 2 + side, constants=constants,
        )
        correct += sum(r.correct for r in run_experiment(cfg).reports)
    return correct / (2 * (trials // 2))


def minimal_n(
    protocol: str,
    k: int,
    ell: int,
    eps: float,
    trials: int = 300,
    seed: int = 0,
    target: float = 2.0 / 3.0,
    constants=None,
    n_cap: int = N_CAP,
) -> dict:
    """Geometric bracket + bisection for the smallest n with success rate >= target."""
    # Default (schedule) n as the starting upper guess.
    defaults = {
        "levin": lambda: pu.LevinSchedule.from_params(k, ell, eps).total_players,
        "smooth": lambda: pu.SmoothSchedule.from_params(k, ell, eps).total_players,
        "private-si": lambda: infer.si_uniformity_players(k, ell, eps),
        "dummy-const": lambda: 1000,
    }
    n_hi = min(defaults.get(protocol, lambda: 1000)(), n_cap)
    evals = 0
    while _success_rate_at(protocol, k, ell, eps, n_hi, trials, seed + evals, constants) < target:
        evals += 1
        n_hi *= 2
        if n_hi > n_cap:
            return {"protocol": protocol, "k": k, "n_min": None, "censored": True}
    n_lo = n_hi // 2
    while n_lo >= 8 and _success_rate_at(protocol, k, ell, eps, n_lo, trials, seed + 100 + evals, constants) >= target:
        evals += 1
        n_hi = n_lo
        n_lo //= 2
    # Bisect in log space between failing n_lo and passing n_hi.
    for i in range(4):
        mid = int(round(math.sqrt(n_lo * n_hi)))
        if mid in (n_lo, n_hi):
            break
        if _success_rate_at(protocol, k, ell, eps, mid, trials, seed + 200 + i, constants) >= target:
            n_hi = mid
        else:
            n_lo = mid
    return {"protocol": protocol, "k": k, "ell": ell, "eps": eps, "n_min": n_hi, "censored": False}


def scaling_report(
    protocol_ids: list[str],
    k_grid: list[int],
    eps: float,
    ell: int,
    trials: int = 300,
    seed: int = 0,
    constants=None,
) -> dict:
    """Minimal-n estimates over k plus a least-squares log-log slope per protocol."""
    if len(k_grid) < 3:
        raise KeyError("need at least 3 alphabet sizes")
    table = []
    slopes = {}
    for proto in protocol_ids:
        rows = [minimal_n(proto, k, ell, eps, trials=trials, seed=seed, constants=constants) for k in k_grid]
        table.extend(rows)
        if all(not r["censored"] for r in rows):
            x = np.log(np.array(k_grid, dtype=float))
            y = np.log(np.array([r["n_min"] for r in rows], dtype=float))
            slope = float(np.polyfit(x, y, 1)[0])
        else:
            slope = None
        slopes[proto] = slope
    return {"table": table, "slopes": slopes, "eps": eps, "ell": ell, "trials": trials}
