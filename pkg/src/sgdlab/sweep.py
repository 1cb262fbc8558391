"""Declarative experiment grids with deterministic seeding and resumability.

A sweep is the Cartesian product of its grid lists times a replica count.
Every run is fully determined by (spec, run_index): the run seed is a
stable hash of (base_seed, run_index), so results are independent of
worker count and scheduling.  Results persist as JSONL keyed by
(spec_fingerprint, run_index).
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from sgdlab import mlp as mlp_engine
from sgdlab import perceptron as perceptron_engine
from sgdlab.data import ChiDistribution, sample_chi_dataset
from sgdlab.records import RunRecord, TrainConfig, derive_seed

# grid axes in canonical iteration order (replica index varies fastest)
GRID_KEYS = ("alpha", "temperature", "eta", "batch_size", "P", "chi", "d",
             "depth", "width")


@dataclass(frozen=True)
class SweepSpec:
    """Grid of runs for one model kind.

    ``grid`` maps axis names (GRID_KEYS subset) to value lists; exactly one
    of ``temperature`` or ``eta`` must be present.  ``budget`` is the
    per-run max_steps.
    """

    model_kind: str
    grid: dict
    replicas: int
    base_seed: int
    budget: int = 50_000_000
    loss_kind: str = "hinge"
    divergence_norm: float = 1e8
    test_points: int = 0

    def __post_init__(self):
        if self.model_kind not in ("perceptron", "mlp"):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.loss_kind not in ("hinge", "xent"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        unknown = set(self.grid) - set(GRID_KEYS)
        if unknown:
            raise ValueError(f"unknown grid axes: {sorted(unknown)}")
        if ("temperature" in self.grid) == ("eta" in self.grid):
            raise ValueError("grid must define exactly one of temperature / eta")
        for key in ("alpha", "batch_size", "P", "chi", "d"):
            if key not in self.grid or len(self.grid[key]) == 0:
                raise ValueError(f"grid axis {key!r} must be non-empty")
        object.__setattr__(self, "grid",
                           {k: tuple(self.grid[k]) for k in GRID_KEYS if k in self.grid})

    @property
    def axes(self) -> list[str]:
        return [k for k in GRID_KEYS if k in self.grid]

    @property
    def n_runs(self) -> int:
        n = self.replicas
        for k in self.axes:
            n *= len(self.grid[k])
        return n

    def coordinates(self, run_index: int) -> dict:
        """Grid coordinates plus replica for a flat run index."""
        if not 0 <= run_index < self.n_runs:
            raise IndexError(f"run_index {run_index} out of range")
        rep = run_index % self.replicas
        cell = run_index // self.replicas
        coords = {}
        for k in reversed(self.axes):
            vals = self.grid[k]
            coords[k] = vals[cell % len(vals)]
            cell //= len(vals)
        coords["replica"] = rep
        return coords

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SweepResult:
    """Records of a sweep, sorted by run index."""

    records: list[RunRecord]
    spec_fingerprint: str

    def by_coordinates(self) -> list[RunRecord]:
        return sorted(self.records, key=lambda r: r.run_index)


def _execute_run(spec: SweepSpec, run_index: int) -> RunRecord:
    coords = spec.coordinates(run_index)
    seed = derive_seed(spec.base_seed, run_index)
    chi, d, P = float(coords["chi"]), int(coords["d"]), int(coords["P"])
    B = int(coords["batch_size"])
    alpha = float(coords["alpha"])
    if "temperature" in coords:
        eta = float(coords["temperature"]) * B
    else:
        eta = float(coords["eta"])
    dist = ChiDistribution(chi=chi, d=d)
    ds = sample_chi_dataset(dist, P, seed=derive_seed(seed, "data"))
    test_ds = None
    if spec.test_points > 0:
        test_ds = sample_chi_dataset(dist, spec.test_points, seed=derive_seed(seed, "test"))
    cfg = TrainConfig(alpha=alpha, eta=eta, batch_size=B,
                      seed=derive_seed(seed, "train"), max_steps=spec.budget,
                      divergence_norm=spec.divergence_norm)
    if spec.model_kind == "perceptron":
        rec = perceptron_engine.train_to_zero(ds, cfg, test_ds=test_ds)
    else:
        depth = int(coords.get("depth", 5))
        width = int(coords.get("width", 64))
        if spec.loss_kind == "xent":
            es = mlp_engine.EarlyStopConfig(
                checkpoint_every=max(1, P // B), patience=10, validation_fraction=0.15)
            rec = mlp_engine.cross_entropy_train_early_stop(
                ds, cfg, es, depth=depth, width=width, test_ds=test_ds)
        else:
            rec = mlp_engine.sgd_train(ds, cfg, depth=depth, width=width, test_ds=test_ds)
    rec.run_index = run_index
    rec.spec_fingerprint = spec.fingerprint()
    return rec


def _safe_run(spec: SweepSpec, run_index: int) -> RunRecord:
    try:
        return _execute_run(spec, run_index)
    except Exception as exc:  # a failed run must never abort the sweep
        coords = spec.coordinates(run_index)
        B = int(coords["batch_size"])
        eta = (float(coords["temperature"]) * B if "temperature" in coords
               else float(coords["eta"]))
        return RunRecord(
            t_star=0.0, steps=0, diverged=True,
            alpha=float(coords["alpha"]), eta=eta, batch_size=B,
            temperature=eta / B, P=int(coords["P"]), d=int(coords["d"]),
            seed=derive_seed(spec.base_seed, run_index), chi=float(coords["chi"]),
            run_index=run_index, spec_fingerprint=spec.fingerprint(),
            error=f"{type(exc).__name__}: {exc}",
        )


def run_sweep(spec: SweepSpec, worker_count: int = 1,
              run_indices=None) -> SweepResult:
    """Execute all (or the given) runs; output is sorted by run index."""
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    indices = list(range(spec.n_runs)) if run_indices is None else sorted(run_indices)
    if worker_count == 1 or len(indices) <= 1:
        records = [_safe_run(spec, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=worker_count) as pool:
            records = list(pool.map(_safe_run, [spec] * len(indices), indices,
                                    chunksize=1))
    records.sort(key=lambda r: r.run_index)
    return SweepResult(records=records, spec_fingerprint=spec.fingerprint())


def persist(result: SweepResult, path) -> None:
    """Atomically write the sorted records as JSONL (byte-reproducible)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        for rec in result.by_coordinates():
            f.write(rec.to_json_line() + "\n")
    os.replace(tmp, path)


def load_result(path) -> SweepResult:
    """Load a JSONL store; a truncated final line is discarded with a warning."""
    records = []
    with open(path) as f:
        lines = f.readlines()
    for k, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(RunRecord.from_json_line(line))
        except (json.JSONDecodeError, TypeError) as exc:
            if k == len(lines) - 1:
                warnings.warn(f"discarding truncated final line of {path}")
            else:
                raise ValueError(f"corrupt record at line {k + 1} of {path}") from exc
    fps = {r.spec_fingerprint for r in records}
    if len(fps) > 1:
        raise ValueError(f"{path} mixes sweep fingerprints: {sorted(fps)}")
    records.sort(key=lambda r: r.run_index)
    return SweepResult(records=records, spec_fingerprint=fps.pop() if fps else "")


def resume(spec: SweepSpec, path, worker_count: int = 1) -> SweepResult:
    """Run whatever is missing from the store at path, appending as runs finish.

    Resuming a complete store performs zero runs; the returned result is
    identical to an uninterrupted sweep.  Refuses stores written for a
    different spec.
    """
    fingerprint = spec.fingerprint()
    have: dict[int, RunRecord] = {}
    if os.path.exists(path):
        loaded = load_result(path)
        if loaded.records and loaded.spec_fingerprint != fingerprint:
            raise ValueError(
                f"store {path} belongs to sweep {loaded.spec_fingerprint}, "
                f"not {fingerprint}")
        have = {r.run_index: r for r in loaded.records}
    missing = [i for i in range(spec.n_runs) if i not in have]
    if missing:
        fresh = run_sweep(spec, worker_count=worker_count, run_indices=missing)
        with open(path, "a") as f:
            for rec in fresh.records:
                f.write(rec.to_json_line() + "\n")
                f.flush()
        have.update({r.run_index: r for r in fresh.records})
    records = [have[i] for i in range(spec.n_runs)]
    return SweepResult(records=records, spec_fingerprint=fingerprint)
