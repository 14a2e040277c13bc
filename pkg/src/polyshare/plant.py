"""Continuous-time polynomial plant under zero-order-hold secure feedback."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from polyshare.harness.session import RunMetrics, collect_metrics, open_session
from polyshare.modring import FixedPointFormat, ScaledResidue, decode, signed
from polyshare.polyctrl import (
    PolynomialLaw,
    encode_state,
    evaluate_plaintext,
    evaluate_secure,
    plan_evaluation,
    quantize_law,
)


_COUNTERS = ("adds", "muls", "draws", "messages", "bytes")


@dataclass(frozen=True)
class PlantModel:
    """x1' = (-x1 + x1 x2 + x2 u) / T,  x2' = (x1 + 2 x2 + x1^2 + x1^2 x2 + u) / T."""

    T: float = 1000.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"time scaling must be positive, got {self.T}")

    def vector_field(self, x: np.ndarray, u: float) -> np.ndarray:
        x1, x2 = x
        return np.array([-x1 + x1 * x2 + x2 * u, x1 + 2 * x2 + x1**2 + x1**2 * x2 + u]) / self.T


@dataclass(frozen=True)
class SimConfig:
    ts: float = 1.0
    substeps: int = 10
    steps: int = 2000
    x0: tuple[float, float] = (2.0, -2.0)
    box: float = 6.0

    def __post_init__(self):
        if not self.ts > 0:
            raise ValueError(f"sample period must be positive, got {self.ts}")
        if self.substeps < 1:
            raise ValueError(f"need at least one substep, got {self.substeps}")
        if self.steps < 0:
            raise ValueError("negative horizon")


def rk4(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float, n: int) -> np.ndarray:
    for _ in range(n):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def plant_step(x: Sequence[float], u: float, cfg: SimConfig, model: PlantModel = PlantModel()) -> np.ndarray:
    """Integrate over one sample period with ``u`` held constant."""
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and math.isfinite(u)):
        raise ValueError("non-finite state or input")
    return rk4(lambda s: model.vector_field(s, u), x, cfg.ts / cfg.substeps, cfg.substeps)


def in_box(x: Sequence[float], box: float) -> bool:
    return bool(np.all(np.abs(np.asarray(x)) < box))


@dataclass
class TrajectoryRow:
    step: int
    t: float
    x1: float
    x2: float
    u_quantized: int  # signed integer at the result scale
    u_decoded: float


@dataclass
class Trajectory:
    rows: list[TrajectoryRow] = field(default_factory=list)
    diverged: bool = False
    metrics: RunMetrics | None = None
    scheme: str = ""
    # per control step and role: operation and message counts of that step alone
    step_metrics: list[dict] = field(default_factory=list)

    @property
    def states(self) -> np.ndarray:
        return np.array([[r.x1, r.x2] for r in self.rows])

    @property
    def inputs(self) -> np.ndarray:
        return np.array([r.u_decoded for r in self.rows])

    def write_step_metrics(self, path: str | Path) -> None:
        fields = ["step", "role", "adds", "muls", "draws", "messages", "bytes"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(self.step_metrics)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "t", "x1", "x2", "u_quantized", "u_decoded"])
            for r in self.rows:
                w.writerow([r.step, repr(r.t), repr(r.x1), repr(r.x2), r.u_quantized, repr(r.u_decoded)])


def run_closed_loop(law: PolynomialLaw, fmt: FixedPointFormat, scheme: str | None, cfg: SimConfig,
                    seed: int | None = None, model: PlantModel = PlantModel(), transport: str = "in-memory",
                    zero_mode: str = "communication", share_constants: bool = False) -> Trajectory:
    """Sample, quantize, evaluate the law, hold, integrate; repeat.

    ``scheme=None`` evaluates the quantized law in the clear (the oracle
    loop). A state outside ``|x_i| < box`` stops the run with
    ``diverged=True``; the trajectory up to that point is kept.
    """
    qlaw = quantize_law(law, fmt)
    session = plan = None
    if scheme is not None:
        plan = plan_evaluation(qlaw, scheme, share_constants=share_constants, zero_mode=zero_mode)
        session = open_session(plan, transport=transport, seed=seed)
    traj = Trajectory(scheme=scheme or "plaintext")
    x = np.asarray(cfg.x0, dtype=float)
    last: dict = {}
    try:
        for k in range(cfg.steps + 1):
            if not in_box(x, cfg.box):
                traj.diverged = True
                traj.rows.append(TrajectoryRow(k, k * cfg.ts, float(x[0]), float(x[1]), 0, math.nan))
                break
            state = encode_state(x, fmt)
            if session is None:
                u_res: ScaledResidue = evaluate_plaintext(qlaw, state)
            else:
                u_res = evaluate_secure(qlaw, plan, state, session)
                now = collect_metrics(session).by_role()
                for role, m in now.items():
                    prev = last.get(role)
                    row = {"step": k, "role": role}
                    row.update({f: getattr(m, f) - (getattr(prev, f) if prev else 0) for f in _COUNTERS})
                    traj.step_metrics.append(row)
                last = now
            u = float(decode(u_res, fmt))
            traj.rows.append(TrajectoryRow(k, k * cfg.ts, float(x[0]), float(x[1]), signed(u_res.value, fmt.Q), u))
            if k < cfg.steps:
                x = plant_step(x, u, cfg, model)
    finally:
        if session is not None:
            traj.metrics = collect_metrics(session)
            session.close()
    return traj
