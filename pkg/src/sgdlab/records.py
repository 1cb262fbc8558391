"""Run configuration and the per-run observable record shared by the engines."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (order-sensitive)."""
    blob = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big") >> 1


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters: the noise temperature is T = eta / batch_size.

    ``alpha`` is the output scale; the hinge margin is 1/alpha.  Training
    stops at the first epoch boundary where the full-batch loss is exactly
    zero, or when the run is flagged as diverged (weight norm above
    ``divergence_norm``, non-finite loss, or ``max_steps`` exhausted).
    """

    alpha: float
    eta: float
    batch_size: int
    seed: int
    max_steps: int = 50_000_000
    divergence_norm: float = 1e8

    def __post_init__(self):
        if self.alpha <= 0 or self.eta <= 0:
            raise ValueError("alpha and eta must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps < 1 or self.divergence_norm <= 0:
            raise ValueError("max_steps and divergence_norm must be positive")

    @property
    def temperature(self) -> float:
        return self.eta / self.batch_size

    @classmethod
    def from_temperature(cls, alpha, temperature, batch_size, seed, **kwargs) -> TrainConfig:
        return cls(alpha=alpha, eta=temperature * batch_size,
                   batch_size=batch_size, seed=seed, **kwargs)


def _finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class RunRecord:
    """All observables of one training run plus its grid coordinates.

    Serializes to one JSON object per line.  Observables that are undefined
    for a run (e.g. w1_final without a true normal, delta_w of a diverged
    run) are stored as null.
    """

    t_star: float
    steps: int
    diverged: bool
    alpha: float
    eta: float
    batch_size: int
    temperature: float
    P: int
    d: int
    seed: int
    chi: float | None = None
    w1_final: float | None = None
    w_perp_norm: float | None = None
    delta_w: float | None = None
    test_error: float | None = None
    trajectory: list | None = None
    # fully-connected extensions
    depth: int | None = None
    width: int | None = None
    regime_alpha: str | None = None
    loss_kind: str = "hinge"
    zeta_phase: str | None = None
    val_error: float | None = None
    final_val_error: float | None = None
    exhausted: bool = False
    # sweep-runner extensions
    run_index: int | None = None
    spec_fingerprint: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("t_star", "w1_final", "w_perp_norm", "delta_w", "test_error",
                    "val_error", "final_val_error"):
            out[key] = _finite_or_none(out[key])
        return out

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> RunRecord:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def from_json_line(cls, line: str) -> RunRecord:
        return cls.from_dict(json.loads(line))


def write_jsonl(records, path) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(rec.to_json_line() + "\n")


def read_jsonl(path) -> list[RunRecord]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(RunRecord.from_json_line(line))
    return out
