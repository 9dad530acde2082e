"""Observable assembly, trajectory distances and short-time polynomial fits."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .pauli import PauliString


class MetricError(ValueError):
    pass


@dataclass
class Trajectory:
    values: np.ndarray
    errors: np.ndarray
    times: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        self.errors = np.zeros_like(self.values) if self.errors is None else np.asarray(self.errors, dtype=float)
        if not (self.values.shape == self.errors.shape == self.times.shape) or self.values.ndim != 1:
            raise MetricError("values, errors and times must be 1-d arrays of equal length")
        if not np.all(np.isfinite(self.errors)) or np.any(self.errors < 0):
            raise MetricError("errors must be finite and non-negative")

    @classmethod
    def on_grid(cls, values, T: float, errors=None, label: str = "") -> "Trajectory":
        values = np.asarray(values, dtype=float)
        times = np.linspace(0.0, T, len(values))
        return cls(values, errors, times, label)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self) > 1 else 0.0

    def downsample(self, every: int) -> "Trajectory":
        """Keep every ``every``-th point (a fine run evaluated on a coarse grid)."""
        return Trajectory(self.values[::every], self.errors[::every], self.times[::every], self.label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value", "error"])
        for t, v, e in zip(self.times, self.values, self.errors):
            w.writerow([repr(float(t)), repr(float(v)), repr(float(e))])
        return buf.getvalue()


def assemble_observable(
    values: np.ndarray,
    coefficients: Sequence[float],
    T: float,
    errors: np.ndarray | None = None,
    label: str = "",
) -> Trajectory:
    """``sum_q J_q v_q(s)`` with independent-error propagation.

    ``values`` has one row per observable string, in coefficient order.
    """
    v = np.asarray(values, dtype=float)
    c = np.asarray(coefficients, dtype=float)
    if v.ndim != 2 or v.shape[0] != len(c):
        raise MetricError(f"need {len(c)} rows of values, got shape {v.shape}")
    e = np.zeros_like(v) if errors is None else np.asarray(errors, dtype=float)
    if e.shape != v.shape:
        raise MetricError("errors do not match values")
    return Trajectory.on_grid(c @ v, T, np.sqrt((c**2) @ (e**2)), label)


def select_rows(
    strings: Sequence[PauliString], data: np.ndarray, wanted: Sequence[PauliString]
) -> np.ndarray:
    """Rows of ``data`` for ``wanted``, looked up by string."""
    index = {p: i for i, p in enumerate(strings)}
    missing = [str(p) for p in wanted if p not in index]
    if missing:
        raise MetricError(f"missing quantities: {', '.join(missing)}")
    return np.asarray(data)[[index[p] for p in wanted]]


def l_norm(a: Trajectory, b: Trajectory) -> tuple[float, float]:
    """``sqrt(dt sum_s (a_s - b_s)^2)`` and its leading-order error."""
    if len(a) != len(b) or not np.allclose(a.times, b.times):
        raise MetricError("trajectories live on different time grids")
    dt = a.dt
    d = a.values - b.values
    value = float(np.sqrt(dt * np.sum(d**2)))
    var_d = a.errors**2 + b.errors**2
    if value == 0.0:
        # derivative of the root is singular at 0; fall back to the first-order bound
        return 0.0, float(np.sqrt(dt * np.sum(var_d)))
    # dL/dd_s = dt d_s / L
    return value, float(dt * np.sqrt(np.sum(d**2 * var_d)) / value)


@dataclass
class FitResult:
    p: np.ndarray  # coefficients of t and t^2
    covariance: np.ndarray
    weighted: bool = True
    points: int = 0

    def to_dict(self) -> dict:
        return {
            "p1": float(self.p[0]),
            "p2": float(self.p[1]),
            "cov": self.covariance.tolist(),
            "weighted": self.weighted,
            "points": self.points,
        }


def fit_quadratic(traj: Trajectory, tmax: float = 1.2, weighted: bool = True) -> FitResult:
    """Least squares on ``{t, t^2}`` (no constant term) over ``t <= tmax``.

    Weights are ``1/error^2``.  With all errors zero (or ``weighted=False``)
    unit weights are used and the covariance ``(A^T A)^-1`` is scaled by the
    residual variance, so exactly representable data get zero covariance.
    """
    keep = traj.times <= tmax + 1e-12
    t, y, e = traj.times[keep], traj.values[keep], traj.errors[keep]
    if len(t) < 3:
        raise MetricError("need at least 3 points inside the fit window")
    A = np.column_stack([t, t**2])
    use_w = weighted and np.all(e > 0)
    if weighted and np.any(e > 0) and not use_w:
        # zero-error points would get infinite weight; pin them at the smallest nonzero error
        e = np.where(e > 0, e, e[e > 0].min())
        use_w = True
    w = 1.0 / e**2 if use_w else np.ones_like(t)
    normal = A.T @ (A * w[:, None])
    if abs(np.linalg.det(normal)) < 1e-300 or np.linalg.matrix_rank(A) < 2:
        raise MetricError("singular fit design")
    cov = np.linalg.inv(normal)
    p = cov @ (A.T @ (w * y))
    if not use_w:
        resid = y - A @ p
        dof = len(t) - 2
        cov = cov * (resid @ resid / dof if dof > 0 else 0.0)
    return FitResult(p, 0.5 * (cov + cov.T), bool(use_w), int(len(t)))


def p_metric(fit: FitResult, ref: FitResult) -> tuple[float, float]:
    """``|p - p_ref| / |p_ref|`` with leading-order error from both covariances."""
    nref = float(np.linalg.norm(ref.p))
    if nref == 0.0:
        raise MetricError("reference fit has zero norm")
    d = fit.p - ref.p
    nd = float(np.linalg.norm(d))
    value = nd / nref
    # gradients of nd / nref with respect to p and p_ref
    g_fit = d / (nd * nref) if nd > 0 else np.zeros(2)
    g_ref = -g_fit - nd * ref.p / nref**3
    var = g_fit @ fit.covariance @ g_fit + g_ref @ ref.covariance @ g_ref
    return value, float(np.sqrt(max(var, 0.0)))


@dataclass
class MetricReport:
    """Per-realization summary keyed by (m, mu5, r, seed)."""

    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append(row)

    def to_json(self) -> str:
        return json.dumps(self.rows, indent=1, sort_keys=True)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        keys = list(self.rows[0])
        buf = io.StringIO()
        w = csv.DictWriter(buf, keys, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row.get(k)) for k in keys})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def summarize(rows: Sequence[Mapping], key: str) -> dict:
    vals = np.array([r[key] for r in rows], dtype=float)
    return {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max())}
