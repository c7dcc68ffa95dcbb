"""Experiment configuration, timed attack campaigns, and result serialization."""
from __future__ import annotations

import csv
import io
import json
import multiprocessing as mp
import statistics
import time
from dataclasses import asdict, dataclass
from multiprocessing.connection import wait
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np
import yaml

from .attack import (
    DEFAULT_CAP,
    BRUTE_FORCE_MAX_LAMBDA,
    ModelMismatchError,
    brute_force_seeds,
    candidate_set,
    direct_matrix,
    misr_matrix,
    observe,
    solve_seed,
    verify_seed,
    CoefficientSystem,
    collected_indices,
)
from .gf2 import BitVector
from .scansim import LfsrSpec, Oracle, ScanDesign

MODES = ("simulate", "attack", "attack-misr", "brute-check", "bench")
DEFAULT_SWEEP = (8, 16, 32, 64, 128, 256, 500)
BENCH_TIMEOUT_SECS = 8 * 3600.0
CSV_FIELDS = (
    "lambda", "h", "trial", "setup_ms", "solve_ms", "total_ms",
    "rank", "candidates", "verified", "timed_out",
)


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    lambdas: tuple[int, ...]
    b: int = 1
    h: Optional[int] = None
    shadow: bool = True
    taps: str = "random"
    misr_taps: str = "all-ones"
    seed: str = "random"
    trials: int = 10
    rng_seed: int = 0
    cap: int = DEFAULT_CAP
    timeout: Optional[float] = None
    workers: int = 1

    @property
    def lam(self) -> int:
        if len(self.lambdas) != 1:
            raise ConfigError("lambda", f"mode {self.mode} takes a single value")
        return self.lambdas[0]

    @property
    def uses_misr(self) -> bool:
        return self.mode == "attack-misr" or (self.mode != "attack" and self.h is not None)


# config keys accepted at top level; nested sections map onto these
_SECTIONS = {"lfsr": {"taps": "taps"}, "misr": {"h": "h", "taps": "misr_taps"}}
_TOP_LEVEL = {
    "mode", "lambda", "b", "h", "shadow", "taps", "misr_taps", "seed", "trials",
    "rng_seed", "cap", "timeout_secs", "workers",
}


def flatten_config(doc: Mapping[str, Any]) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, Mapping):
                raise ConfigError(key, "expected a mapping")
            for sub, v in value.items():
                if sub not in _SECTIONS[key]:
                    raise ConfigError(f"{key}.{sub}", "unknown key")
                flat[_SECTIONS[key][sub]] = v
        elif key in _TOP_LEVEL:
            flat[key] = value
        else:
            raise ConfigError(str(key), "unknown key")
    return flat


def _int(name: str, value: Any, lo: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if value < lo:
        raise ConfigError(name, f"must be >= {lo}")
    return value


def _bitstring(name: str, value: Any, lam: Optional[int], keywords: Sequence[str]) -> str:
    if not isinstance(value, str):
        value = str(value)
    if value in keywords:
        return value
    if not value or set(value) - {"0", "1"}:
        raise ConfigError(name, f"expected a bit string or one of {list(keywords)}")
    if lam is not None and len(value) != lam:
        raise ConfigError(name, f"has {len(value)} bits, expected {lam}")
    return value


def config_from_mapping(doc: Mapping[str, Any]) -> ExperimentConfig:
    d = flatten_config(doc)
    mode = d.get("mode")
    if mode not in MODES:
        raise ConfigError("mode", f"expected one of {list(MODES)}, got {mode!r}")

    raw = d.get("lambda", list(DEFAULT_SWEEP) if mode == "bench" else None)
    if raw is None:
        raise ConfigError("lambda", "required")
    if isinstance(raw, str):
        try:
            raw = [int(x) for x in raw.split(",")]
        except ValueError:
            raise ConfigError("lambda", f"cannot parse {raw!r}") from None
    lambdas = tuple(_int("lambda", x, 2) for x in (raw if isinstance(raw, list) else [raw]))
    if not lambdas:
        raise ConfigError("lambda", "empty sweep")
    if mode != "bench" and len(lambdas) != 1:
        raise ConfigError("lambda", f"mode {mode} takes a single value")

    b = _int("b", d.get("b", 1), 1)
    h = d.get("h")
    if h is not None:
        h = _int("h", h, 1)
    if mode == "attack-misr" and h is None:
        raise ConfigError("h", "required in attack-misr mode")
    if mode == "attack" and h is not None:
        raise ConfigError("h", "direct attack mode has no MISR; use attack-misr")
    misr = mode == "attack-misr" or (mode != "attack" and h is not None)
    if misr:
        if b != 1:
            raise ConfigError("b", "MISR chains use b = 1")
        for lam in lambdas:
            if lam % h:
                raise ConfigError("h", f"lambda = {lam} is not divisible by h = {h}")

    shadow = d.get("shadow", not misr)
    if not isinstance(shadow, bool):
        raise ConfigError("shadow", "expected true or false")

    single = lambdas[0] if len(lambdas) == 1 else None
    taps = _bitstring("taps", d.get("taps", "random"), single, ("random",))
    if taps != "random":
        if single is None:
            raise ConfigError("taps", "explicit taps need a single lambda")
        if "1" not in taps:
            raise ConfigError("taps", "must not be all zero")
    misr_taps = _bitstring("misr_taps", d.get("misr_taps", "all-ones"), h, ("all-ones",))
    seed = _bitstring("seed", d.get("seed", "random"), single, ("random",))
    if seed != "random" and single is None:
        raise ConfigError("seed", "explicit seed needs a single lambda")

    if mode == "brute-check" and max(lambdas) > BRUTE_FORCE_MAX_LAMBDA:
        raise ConfigError("lambda", f"brute-check is limited to lambda <= {BRUTE_FORCE_MAX_LAMBDA}")

    timeout = d.get("timeout_secs", BENCH_TIMEOUT_SECS if mode == "bench" else None)
    if timeout is not None:
        if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
            raise ConfigError("timeout_secs", "expected a positive number")
        timeout = float(timeout)

    return ExperimentConfig(
        mode=mode,
        lambdas=lambdas,
        b=b,
        h=h,
        shadow=shadow,
        taps=taps,
        misr_taps=misr_taps,
        seed=seed,
        trials=_int("trials", d.get("trials", 10), 1),
        rng_seed=_int("rng_seed", d.get("rng_seed", 0), 0),
        cap=_int("cap", d.get("cap", DEFAULT_CAP), 1),
        timeout=timeout,
        workers=_int("workers", d.get("workers", 1), 1),
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse a YAML experiment document (see README for the keys)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("document", f"malformed YAML: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, Mapping):
        raise ConfigError("document", "top level must be a mapping")
    return config_from_mapping(doc)


def gen_random_spec(lam: int, rng: np.random.Generator) -> LfsrSpec:
    """Random feedback taps with c_0 = 1; the rest are fair coin flips."""
    if lam < 2:
        raise ValueError("lambda must be at least 2")
    coins = rng.integers(0, 2, size=lam - 1)
    return LfsrSpec(lam, BitVector.from_bits([1, *coins.tolist()]))


def trial_rng(config: ExperimentConfig, lam: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([config.rng_seed, lam, trial])


def trial_design(config: ExperimentConfig, lam: int, trial: int) -> tuple[ScanDesign, BitVector]:
    """Structural design and secret seed for one trial; pure in (config, lam, trial)."""
    rng = trial_rng(config, lam, trial)
    if config.taps == "random":
        taps = gen_random_spec(lam, rng).taps
    else:
        taps = BitVector.from_str(config.taps)
    if config.seed == "random":
        seed = BitVector.from_bits(rng.integers(0, 2, size=lam).tolist())
    else:
        seed = BitVector.from_str(config.seed)
    if config.uses_misr:
        d = None if config.misr_taps == "all-ones" else BitVector.from_str(config.misr_taps)
        return ScanDesign.with_misr(taps, config.h, d, shadow=config.shadow), seed
    return ScanDesign.direct(taps, b=config.b, shadow=config.shadow), seed


@dataclass
class BenchRecord:
    lam: int
    h: Optional[int]
    trial: int
    setup_ms: float
    solve_ms: float
    total_ms: float
    rank: Optional[int]
    candidates: Optional[int]
    verified: bool
    timed_out: bool = False


def run_trial(config: ExperimentConfig, lam: int, trial: int) -> BenchRecord:
    design, seed = trial_design(config, lam, trial)
    clock = time.perf_counter
    start = clock()
    oracle = Oracle(design, seed)
    obs = observe(design, oracle)
    t0 = clock()
    if design.misr is None:
        a, meta = direct_matrix(design), tuple(collected_indices(design))
    else:
        a, meta = misr_matrix(design)
    system = CoefficientSystem(a, obs, meta, "direct" if design.misr is None else "misr")
    t1 = clock()
    sol = solve_seed(system)
    t2 = clock()
    verified = sol.contains(seed) and verify_seed(design, sol.particular, system)
    if config.mode == "brute-check":
        brute = {s.bits for s in brute_force_seeds(design, obs)}
        verified = verified and brute == candidate_set(sol, config.cap)
    end = clock()
    return BenchRecord(
        lam=lam,
        h=design.h,
        trial=trial,
        setup_ms=(t1 - t0) * 1e3,
        solve_ms=(t2 - t1) * 1e3,
        total_ms=(end - start) * 1e3,
        rank=sol.rank,
        candidates=sol.candidate_count,
        verified=verified,
    )


def _child(conn, fn: Callable, args: tuple) -> None:
    try:
        conn.send(("ok", fn(*args)))
    except ModelMismatchError as exc:
        conn.send(("mismatch", str(exc)))
    except BaseException as exc:  # surfaced in the parent
        conn.send(("error", repr(exc)))
    finally:
        conn.close()


def _run_isolated(
    tasks: list[tuple], fn: Callable, workers: int, timeout: Optional[float], on_timeout: Callable
) -> list:
    """Run ``fn(*task)`` in forked children, at most ``workers`` at once.

    A child still running after ``timeout`` seconds is killed and replaced by
    ``on_timeout(*task)``.  Results come back in task order.
    """
    ctx = mp.get_context("fork")
    results: list = [None] * len(tasks)
    pending = list(enumerate(tasks))
    running: dict = {}
    try:
        while pending or running:
            while pending and len(running) < workers:
                k, task = pending.pop(0)
                recv, send = ctx.Pipe(duplex=False)
                proc = ctx.Process(target=_child, args=(send, fn, task), daemon=True)
                proc.start()
                send.close()
                deadline = None if timeout is None else time.monotonic() + timeout
                running[recv] = (k, task, proc, deadline)
            deadlines = [v[3] for v in running.values() if v[3] is not None]
            wait_for = None if not deadlines else max(0.0, min(deadlines) - time.monotonic())
            ready = wait(list(running), timeout=wait_for)
            for conn in ready:
                k, task, proc, _ = running.pop(conn)
                try:
                    status, payload = conn.recv()
                except EOFError:
                    status, payload = "error", "worker exited without a result"
                conn.close()
                proc.join()
                if status == "mismatch":
                    raise ModelMismatchError(payload)
                if status == "error":
                    raise RuntimeError(f"trial {task} failed: {payload}")
                results[k] = payload
            now = time.monotonic()
            for conn, (k, task, proc, deadline) in list(running.items()):
                if deadline is not None and now >= deadline:
                    proc.kill()
                    proc.join()
                    conn.close()
                    del running[conn]
                    results[k] = on_timeout(*task)
    finally:
        for conn, (_, _, proc, _) in running.items():
            proc.kill()
            proc.join()
            conn.close()
    return results


def run_campaign(config: ExperimentConfig) -> tuple[list[BenchRecord], dict]:
    tasks = [(config, lam, t) for lam in config.lambdas for t in range(config.trials)]
    if config.timeout is None and config.workers == 1:
        records = [run_trial(*task) for task in tasks]
    else:
        limit_ms = (config.timeout or 0.0) * 1e3

        def timed_out(cfg: ExperimentConfig, lam: int, trial: int) -> BenchRecord:
            h = cfg.h if cfg.uses_misr else None
            return BenchRecord(lam, h, trial, limit_ms, limit_ms, limit_ms, None, None, False, True)

        records = _run_isolated(tasks, run_trial, config.workers, config.timeout, timed_out)
    return records, summarize(records)


def summarize(records: Sequence[BenchRecord]) -> dict:
    by_lam: dict[int, list[BenchRecord]] = {}
    for r in records:
        by_lam.setdefault(r.lam, []).append(r)
    out = {}
    for lam, recs in by_lam.items():
        done = [r for r in recs if not r.timed_out]
        entry: dict[str, Any] = {"trials": len(recs), "timed_out": len(recs) - len(done)}
        if done:
            totals = [r.total_ms for r in done]
            cands = [r.candidates for r in done]
            entry.update(
                mean_total_ms=statistics.fmean(totals),
                median_total_ms=statistics.median(totals),
                mean_setup_ms=statistics.fmean(r.setup_ms for r in done),
                mean_solve_ms=statistics.fmean(r.solve_ms for r in done),
                unique_fraction=sum(c == 1 for c in cands) / len(done),
                mean_candidates=statistics.fmean(cands),
                median_candidates=statistics.median(cands),
                all_verified=all(r.verified for r in done),
            )
        out[lam] = entry
    return out


def _record_row(r: BenchRecord) -> dict[str, Any]:
    row = asdict(r)
    row["lambda"] = row.pop("lam")
    return {k: row[k] for k in CSV_FIELDS}


def emit_results(records: Sequence[BenchRecord], fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            row = _record_row(r)
            w.writerow(
                "" if v is None else ("true" if v is True else "false" if v is False else v)
                for v in row.values()
            )
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps(_record_row(r)) + "\n" for r in records)
    raise ValueError(f"unknown format {fmt!r}")


def _opt_int(v: str) -> Optional[int]:
    return None if v == "" else int(v)


def parse_results(text: str, fmt: str = "csv") -> list[BenchRecord]:
    """Inverse of :func:`emit_results`."""
    rows: list[dict[str, Any]]
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        rows = []
        for raw in reader:
            rows.append(
                {
                    "lambda": int(raw["lambda"]),
                    "h": _opt_int(raw["h"]),
                    "trial": int(raw["trial"]),
                    "setup_ms": float(raw["setup_ms"]),
                    "solve_ms": float(raw["solve_ms"]),
                    "total_ms": float(raw["total_ms"]),
                    "rank": _opt_int(raw["rank"]),
                    "candidates": _opt_int(raw["candidates"]),
                    "verified": raw["verified"] == "true",
                    "timed_out": raw["timed_out"] == "true",
                }
            )
    elif fmt == "jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        raise ValueError(f"unknown format {fmt!r}")
    out = []
    for row in rows:
        row = dict(row)
        row["lam"] = row.pop("lambda")
        out.append(BenchRecord(**row))
    return out


@dataclass
class SimulationRecord:
    lam: int
    h: Optional[int]
    trial: int
    taps: str
    seed: str
    observations: str


def simulate(config: ExperimentConfig) -> list[SimulationRecord]:
    """Oracle outputs only: the bits an attacker would capture."""
    out = []
    for lam in config.lambdas:
        for t in range(config.trials):
            design, seed = trial_design(config, lam, t)
            obs = observe(design, Oracle(design, seed))
            out.append(SimulationRecord(lam, design.h, t, str(design.lfsr.taps), str(seed), str(obs)))
    return out


def emit_simulation(records: Sequence[SimulationRecord], fmt: str = "csv") -> str:
    names = ("lambda", "h", "trial", "taps", "seed", "observations")
    rows = []
    for r in records:
        d = asdict(r)
        d["lambda"] = d.pop("lam")
        rows.append({k: d[k] for k in names})
    if fmt == "jsonl":
        return "".join(json.dumps(r) + "\n" for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow("" if v is None else v for v in r.values())
    return buf.getvalue()
