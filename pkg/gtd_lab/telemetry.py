"""Per-run metric recording and run summaries."""

import json
import math
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field


@dataclass
class CheckpointRow:
    """Iterates and metric values at one checkpoint."""

    n: int
    theta: np.ndarray
    x: np.ndarray
    metrics: Dict[str, float]
    theta_avg: Optional[np.ndarray] = None


class MetricSummary(BaseModel):
    """Final, minimum and window-maximum value of one metric."""

    final: float
    minimum: float
    window_max: float


class RunSummary(BaseModel):
    """Summary of one seeded run."""

    seed: int
    horizon: int
    steps_completed: int
    checkpoints: int
    wall_time_s: float
    diverged: bool = False
    divergence_step: Optional[int] = None
    error: Optional[str] = None
    window: int = Field(0, description="Steps covered by the window maxima")
    metrics: Dict[str, MetricSummary] = Field(default_factory=dict)
    final_theta: Optional[List[float]] = None
    final_x: Optional[List[float]] = None
    averaged_theta: Optional[List[float]] = None
    burn_in: int = 0
    trace_stats: Dict[str, Optional[float]] = Field(default_factory=dict)
    final_kkt_residual: Optional[float] = Field(
        None, description="Unconstrained saddle KKT residual at the last iterate"
    )
    oracle: Dict[str, Any] = Field(default_factory=dict)


class MetricRecorder:
    """Collects checkpoint rows for one run and summarizes them."""

    def __init__(self, metric_names: List[str], window: int = 0):
        """
        Args:
            metric_names: Metric columns, in output order
            window: Window maxima cover checkpoints with n ≥ last n − window;
                0 means the last checkpoint only
        """
        self.metric_names = list(metric_names)
        self.window = window
        self._rows: List[CheckpointRow] = []

    @property
    def rows(self) -> List[CheckpointRow]:
        return list(self._rows)

    def record(
        self,
        n: int,
        theta: np.ndarray,
        x: np.ndarray,
        metrics: Dict[str, float],
        theta_avg: Optional[np.ndarray] = None,
    ) -> None:
        """
        Record one checkpoint.

        Raises:
            ValueError: If n does not exceed the previous checkpoint
        """
        if self._rows and n <= self._rows[-1].n:
            raise ValueError(f"checkpoint {n} does not follow {self._rows[-1].n}")
        self._rows.append(
            CheckpointRow(
                n=n,
                theta=theta.copy(),
                x=x.copy(),
                metrics={name: float(metrics[name]) for name in self.metric_names},
                theta_avg=None if theta_avg is None else theta_avg.copy(),
            )
        )

    def metric_series(self, name: str) -> np.ndarray:
        return np.array([row.metrics[name] for row in self._rows])

    def metric_summaries(self) -> Dict[str, MetricSummary]:
        if not self._rows:
            return {}
        last_n = self._rows[-1].n
        in_window = np.array([row.n >= last_n - self.window for row in self._rows])
        out = {}
        for name in self.metric_names:
            series = self.metric_series(name)
            out[name] = MetricSummary(
                final=float(series[-1]),
                minimum=float(np.min(series)),
                window_max=float(np.max(series[in_window])),
            )
        return out

    def summary(self, **fields) -> RunSummary:
        """
        RunSummary of the recorded rows.

        Args:
            **fields: Run-level fields (seed, horizon, wall_time_s, ...)
        """
        last = self._rows[-1] if self._rows else None
        return RunSummary(
            checkpoints=len(self._rows),
            steps_completed=last.n if last else 0,
            window=self.window,
            metrics=self.metric_summaries(),
            final_theta=last.theta.tolist() if last else None,
            final_x=last.x.tolist() if last else None,
            **fields,
        )

    def export(self, summary: RunSummary, filepath: Optional[str] = None) -> Dict[str, Any]:
        """
        Export a summary as a JSON-ready dict.

        Args:
            summary: Summary of this recorder's run
            filepath: Optional file to write to

        Returns:
            Exported data dictionary
        """
        data = {
            "timestamp": datetime.now().isoformat(),
            "summary": summary.model_dump(mode="json"),
        }
        if filepath:
            with open(filepath, "w") as f:
                json.dump(data, f, indent=2, default=str)
        return data

    def reset(self) -> None:
        self._rows.clear()


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.6g}"


def print_summary(summary: RunSummary) -> None:
    """Print a human-readable run summary."""
    status = "diverged" if summary.diverged else ("failed" if summary.error else "ok")
    print(f"\n=== gtd-lab run (seed {summary.seed}) ===")
    print(f"Status: {status}")
    print(f"Steps: {summary.steps_completed}/{summary.horizon} in {summary.wall_time_s:.2f}s")
    if summary.error:
        print(f"  Error: {summary.error}")
    if summary.metrics:
        print("\nMetrics (final / min / window max):")
        for name, m in summary.metrics.items():
            print(f"  {name}: {_fmt(m.final)} / {_fmt(m.minimum)} / {_fmt(m.window_max)}")
    if summary.averaged_theta is not None:
        avg = ", ".join(_fmt(v) for v in summary.averaged_theta)
        print(f"\nAveraged θ from n0={summary.burn_in}: [{avg}]")
    if summary.trace_stats:
        print(
            f"Trace norm: max {_fmt(summary.trace_stats.get('max'))}, "
            f"mean {_fmt(summary.trace_stats.get('mean'))}"
        )
    if summary.final_kkt_residual is not None:
        print(f"Unconstrained KKT residual: {_fmt(summary.final_kkt_residual)}")
