"""Hierarchy-informed sampling: discretised BBGKY residuals, actions, annealed MH chain."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .hamiltonian import Hamiltonian
from .hierarchy import HierarchyGraph, z_ratio
from .kernels import anneal_sweep
from .pauli import PauliString
from .simulator import MeasurementTable


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 10_000
    thermalization: int = 2_500
    samples: int = 30
    dlambda: float = 1.0
    proposal_scale: float | None = None  # None: the shot spacing 2/N_S of the table
    seed: int = 0
    random_order: bool = False

    def __post_init__(self) -> None:
        if self.sweeps < 1 or self.samples < 1:
            raise ScheduleError("sweeps and samples must be positive")
        if not 0 <= self.thermalization < self.sweeps:
            raise ScheduleError("need 0 <= thermalization < sweeps")
        if (self.sweeps - self.thermalization) % self.samples:
            raise ScheduleError("samples must divide sweeps - thermalization")
        if self.dlambda < 0:
            raise ScheduleError("dlambda must be non-negative")
        if self.proposal_scale is not None and self.proposal_scale <= 0:
            raise ScheduleError("proposal_scale must be positive")

    @property
    def gap(self) -> int:
        return (self.sweeps - self.thermalization) // self.samples

    def sample_sweeps(self) -> list[int]:
        return [self.thermalization + m * self.gap for m in range(1, self.samples + 1)]


@dataclass
class CompiledEquations:
    """BBGKY equations of the first ``n_sources`` quantities over all quantities.

    ``pairs`` lists merged ``(source, target)`` couplings with their
    time-resolved coefficient ``pair_coef[k, s] = sum static * h_B(t_s)``.
    The reverse index maps coordinate ``c = q * nT + (s - 1)`` to the
    residuals ``i * (nT + 1) + s'`` it enters, with dE/dx coefficients.
    """

    quantities: list[PauliString]
    n_sources: int
    nT: int
    dt: float
    pair_src: np.ndarray
    pair_tgt: np.ndarray
    pair_coef: np.ndarray
    ptr: np.ndarray
    ridx: np.ndarray
    rcoef: np.ndarray
    rsq: np.ndarray

    @property
    def n_quantities(self) -> int:
        return len(self.quantities)

    @property
    def n_coords(self) -> int:
        return self.n_quantities * self.nT

    def rhs(self, q: int) -> list[tuple[int, np.ndarray]]:
        sel = np.nonzero(self.pair_src == q)[0]
        return [(int(self.pair_tgt[k]), self.pair_coef[k]) for k in sel]


def _stencil(nT: int, dt: float) -> dict[int, list[tuple[int, float]]]:
    """Coordinate s -> [(s', dD_s'/dx_s)] for the finite-difference derivative."""
    out: dict[int, list[tuple[int, float]]] = {s: [] for s in range(1, nT + 1)}
    for sp in range(nT + 1):
        if sp == 0:
            out[1].append((0, 1.0 / dt))
        elif sp == 1:
            out[2].append((1, 0.5 / dt))
        elif sp == nT:
            out[nT].append((nT, 1.0 / dt))
            out[nT - 1].append((nT, -1.0 / dt))
        else:
            out[sp + 1].append((sp, 0.5 / dt))
            out[sp - 1].append((sp, -0.5 / dt))
    return out


def compile_equations(
    h: Hamiltonian, graph: HierarchyGraph, r: int, nT: int, T: float, start_limit: str = "right"
) -> CompiledEquations:
    if nT < 2:
        raise ValueError("the derivative stencil needs nT >= 2")
    sources = graph.Q(r)
    quantities = graph.Q(r + 1)
    return compile_from(h, sources, quantities, nT, T, graph, start_limit)


def compile_from(
    h: Hamiltonian,
    sources: Sequence[PauliString],
    quantities: Sequence[PauliString],
    nT: int,
    T: float,
    graph: HierarchyGraph | None = None,
    start_limit: str = "right",
) -> CompiledEquations:
    """Compile the equations of ``sources`` over ``quantities``.

    The s = 0 residual pairs a forward difference with the couplings at t = 0.
    With ``start_limit="right"`` those couplings are the t -> 0+ limit, so a
    quench switched on at t = 0 (a coupling that jumps there) enters the
    forward derivative it actually drives; ``"exact"`` uses h_B(0) as is.
    """
    from .hierarchy import bbgky_equation

    quantities = list(quantities)
    n_src = len(sources)
    if list(quantities[:n_src]) != list(sources):
        raise ValueError("sources must be the leading quantities")
    index = {p: i for i, p in enumerate(quantities)}
    dt = T / nT
    times = np.arange(nT + 1) * dt
    if start_limit == "right":
        times[0] = np.nextafter(0.0, 1.0)
    elif start_limit != "exact":
        raise ValueError(f"unknown start_limit {start_limit!r}")
    table = h.coupling_table(times)
    merged: dict[tuple[int, int], np.ndarray] = {}
    for i, p in enumerate(sources):
        eq = graph.equation(p) if graph is not None else bbgky_equation(p, h)
        for term in eq.rhs:
            j = index.get(term.target)
            if j is None:
                raise ValueError(f"{term.target} (from {p}) is not among the quantities")
            row = term.static_coefficient * table[term.term_index]
            if (i, j) in merged:
                merged[(i, j)] = merged[(i, j)] + row
            else:
                merged[(i, j)] = row.copy()
    keys = sorted(merged)
    pair_src = np.array([k[0] for k in keys], dtype=np.int64)
    pair_tgt = np.array([k[1] for k in keys], dtype=np.int64)
    pair_coef = np.array([merged[k] for k in keys]).reshape(len(keys), nT + 1)

    stencil = _stencil(nT, dt)
    nq = len(quantities)
    by_target: dict[int, list[int]] = {}
    for k, j in enumerate(pair_tgt.tolist()):
        by_target.setdefault(j, []).append(k)
    ptr = [0]
    ridx: list[int] = []
    rcoef: list[float] = []
    for q in range(nq):
        for s in range(1, nT + 1):
            acc: dict[int, float] = {}
            if q < n_src:
                for sp, d in stencil[s]:
                    key = q * (nT + 1) + sp
                    acc[key] = acc.get(key, 0.0) - d
            for k in by_target.get(q, ()):
                key = int(pair_src[k]) * (nT + 1) + s
                acc[key] = acc.get(key, 0.0) + pair_coef[k, s]
            for key in sorted(acc):
                if acc[key] != 0.0:
                    ridx.append(key)
                    rcoef.append(acc[key])
            ptr.append(len(ridx))
    ptr_a = np.array(ptr, dtype=np.int64)
    rcoef_a = np.array(rcoef, dtype=np.float64)
    rows = np.repeat(np.arange(nq * nT), np.diff(ptr_a))
    rsq = np.bincount(rows, weights=rcoef_a**2, minlength=nq * nT).astype(np.float64)
    return CompiledEquations(
        quantities, n_src, nT, dt, pair_src, pair_tgt, pair_coef,
        ptr_a, np.array(ridx, dtype=np.int64), rcoef_a, rsq,
    )


# ---------------------------------------------------------------------------
# residuals and actions (direct formulas)


def full_grid(cfg: np.ndarray, boundary: np.ndarray) -> np.ndarray:
    """Stack the fixed s = 0 boundary column in front of an (nq, nT) configuration."""
    return np.column_stack([boundary, cfg])


def derivative(x: np.ndarray, q: int, s: int, dt: float) -> float:
    """Finite-difference d<sigma_q>/dt at t_s on a full (nq, nT+1) grid."""
    nT = x.shape[1] - 1
    if s == 0:
        return (x[q, 1] - x[q, 0]) / dt
    if s == 1:
        return (x[q, 2] - x[q, 0]) / (2 * dt)
    if s == nT:
        return (x[q, nT] - x[q, nT - 1]) / dt
    return (x[q, s + 1] - x[q, s - 1]) / (2 * dt)


def residual(q: int, s: int, x: np.ndarray, eqs: CompiledEquations) -> float:
    """E_q(s): BBGKY right-hand side minus the finite-difference derivative.

    ``x`` is the full grid including the boundary column.
    """
    rhs = sum(coef[s] * x[j, s] for j, coef in eqs.rhs(q))
    return float(rhs - derivative(x, q, s, eqs.dt))


def residuals(x: np.ndarray, eqs: CompiledEquations) -> np.ndarray:
    """All residuals, shape (n_sources, nT + 1), vectorised."""
    nT, dt = eqs.nT, eqs.dt
    n = eqs.n_sources
    d = np.empty((n, nT + 1))
    xs = x[:n]
    d[:, 0] = (xs[:, 1] - xs[:, 0]) / dt
    d[:, 1] = (xs[:, 2] - xs[:, 0]) / (2 * dt)
    d[:, 2:nT] = (xs[:, 3 : nT + 1] - xs[:, 1 : nT - 1]) / (2 * dt)
    d[:, nT] = (xs[:, nT] - xs[:, nT - 1]) / dt
    rhs = np.zeros((n, nT + 1))
    np.add.at(rhs, eqs.pair_src, eqs.pair_coef * x[eqs.pair_tgt])
    return rhs - d


def bbgky_weight(eqs: CompiledEquations) -> float:
    return eqs.n_quantities / eqs.n_sources * eqs.dt


def action_bbgky(x: np.ndarray, eqs: CompiledEquations) -> float:
    e = residuals(x, eqs)
    return float(bbgky_weight(eqs) * np.sum(e * e))


def action_quantum(x: np.ndarray, table: MeasurementTable) -> float:
    dev = (x - table.xbar) / table.y
    dev[:, 0] = 0.0  # boundary column is pinned to the measurement
    return float(0.5 * table.dt * np.sum(dev * dev))


def action_total(x: np.ndarray, table: MeasurementTable, eqs: CompiledEquations, z: float) -> float:
    if not 0.0 <= z <= 1.0:
        raise ValueError("z must lie in [0, 1]")
    sq = action_quantum(x, table) if z < 1.0 else 0.0
    sb = action_bbgky(x, eqs) if z > 0.0 else 0.0
    return (1.0 - z) * sq + z * sb


def local_delta(
    x: np.ndarray, q: int, s: int, shift: float, table: MeasurementTable, eqs: CompiledEquations, z: float
) -> float:
    """Action change from moving coordinate (q, s) by ``shift``, from touched terms only."""
    if not 1 <= s <= eqs.nT:
        raise ValueError("only s >= 1 coordinates move")
    c = q * eqs.nT + (s - 1)
    wq = (1.0 - z) * 0.5 * table.dt / table.y[q, s] ** 2
    dev = x[q, s] - table.xbar[q, s]
    dq = wq * (2.0 * shift * dev + shift * shift)
    lo, hi = eqs.ptr[c], eqs.ptr[c + 1]
    if hi == lo:
        return float(dq)
    idx = eqs.ridx[lo:hi]
    coef = eqs.rcoef[lo:hi]
    src, sp = np.divmod(idx, eqs.nT + 1)
    e = np.array([residual(int(i), int(t), x, eqs) for i, t in zip(src, sp)])
    db = z * bbgky_weight(eqs) * float(np.sum((e + coef * shift) ** 2 - e * e))
    return float(dq + db)


def least_squares_solution(table: MeasurementTable, eqs: CompiledEquations, z: float) -> np.ndarray:
    """Exact minimiser of the (quadratic) total action, on the full grid.

    The annealed chain's mean converges to this point; used as a check.
    """
    nq, nT = eqs.n_quantities, eqs.nT
    ncoord = nq * nT
    ridx = np.repeat(np.arange(ncoord), np.diff(eqs.ptr))
    w_b = np.sqrt(z * bbgky_weight(eqs))
    nres = eqs.n_sources * (nT + 1)
    A_b = scipy.sparse.csr_matrix((eqs.rcoef * w_b, (eqs.ridx, ridx)), shape=(nres, ncoord))
    x0 = np.zeros((nq, nT + 1))
    x0[:, 0] = table.xbar[:, 0]
    b_b = -w_b * residuals(x0, eqs).ravel()
    w_q = np.sqrt((1.0 - z) * 0.5 * table.dt) / table.y[:, 1:].ravel()
    A_q = scipy.sparse.diags(w_q)
    b_q = w_q * table.xbar[:, 1:].ravel()
    A = scipy.sparse.vstack([A_b, A_q]).tocsr()
    b = np.concatenate([b_b, b_q])
    sol = scipy.sparse.linalg.lsqr(A, b, atol=1e-14, btol=1e-14, iter_lim=100_000)[0]
    out = x0.copy()
    out[:, 1:] = sol.reshape(nq, nT)
    return out


# ---------------------------------------------------------------------------
# chain


@dataclass
class MitigationResult:
    quantities: list[PauliString]
    chi: np.ndarray  # (nq, nT + 1), boundary column included
    sigma: np.ndarray
    z: float
    acceptance: np.ndarray  # per sweep
    action_trace: list[tuple[int, float]]
    final_lambda: float
    schedule: AnnealSchedule
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "s", "chi", "sigma"])
        for q in range(self.chi.shape[0]):
            for s in range(self.chi.shape[1]):
                w.writerow([q, s, repr(float(self.chi[q, s])), repr(float(self.sigma[q, s]))])
        return buf.getvalue()

    def diagnostics(self) -> dict:
        acc = self.acceptance
        every = [
            {"sweep": int(i + 1), "acceptance": float(acc[i])} for i in range(0, len(acc), 100)
        ]
        return {
            "z": self.z,
            "final_lambda": self.final_lambda,
            "mean_acceptance": float(acc.mean()),
            "final_acceptance": float(acc[-1]),
            "acceptance_trace": every,
            "action_trace": [{"sweep": m, "action": a} for m, a in self.action_trace],
            "schedule": asdict(self.schedule),
            "strings": [str(p) for p in self.quantities],
            **self.meta,
        }


def hot_start(table: MeasurementTable, rng: np.random.Generator) -> np.ndarray:
    nq, nT = table.xbar.shape[0], table.nT
    x = np.empty((nq, nT + 1))
    x[:, 0] = table.xbar[:, 0]
    x[:, 1:] = rng.uniform(-2.0, 2.0, size=(nq, nT))
    return x


def run_chain(
    table: MeasurementTable,
    eqs: CompiledEquations,
    z: float,
    schedule: AnnealSchedule,
    x0: np.ndarray | None = None,
    backend: str | None = None,
    trace_every: int = 100,
) -> MitigationResult:
    """Simulated-annealing Metropolis chain on the total action.

    lambda starts at 0 and grows by ``dlambda`` after every sweep; every
    sweep proposes a Gaussian shift of width ``proposal_scale`` for each
    coordinate in ascending (q, s) order (or a fresh random order).
    """
    if table.xbar.shape != (eqs.n_quantities, eqs.nT + 1):
        raise ValueError("table does not match the compiled equations")
    if not 0.0 <= z <= 1.0:
        raise ValueError("z must lie in [0, 1]")
    rng = np.random.default_rng(schedule.seed)
    start_rng, step_rng = rng.spawn(2)
    x = hot_start(table, start_rng) if x0 is None else np.array(x0, dtype=float, copy=True)
    if x.shape != table.xbar.shape:
        raise ValueError("x0 has the wrong shape")
    x[:, 0] = table.xbar[:, 0]
    scale = schedule.proposal_scale if schedule.proposal_scale is not None else table.dx
    ncoord = eqs.n_coords
    xbar = np.ascontiguousarray(table.xbar, dtype=np.float64)
    qweight = np.ascontiguousarray(1.0 / table.y**2)
    resid = residuals(x, eqs).ravel().copy()
    wq = (1.0 - z) * 0.5 * table.dt
    wb = z * bbgky_weight(eqs)
    ascending = np.arange(ncoord, dtype=np.int64)
    wanted = set(schedule.sample_sweeps())
    samples = []
    acceptance = np.empty(schedule.sweeps)
    trace = [(0, action_total(x, table, eqs, z))]
    lam = 0.0
    for m in range(1, schedule.sweeps + 1):
        shifts = step_rng.normal(0.0, scale, ncoord)
        uniforms = step_rng.random(ncoord)
        order = step_rng.permutation(ncoord) if schedule.random_order else ascending
        n_acc, _ = anneal_sweep(
            x, xbar, qweight, resid, order, eqs.ptr, eqs.ridx, eqs.rcoef, eqs.rsq,
            shifts, uniforms, lam, wq, wb, backend=backend,
        )
        acceptance[m - 1] = n_acc / ncoord
        lam += schedule.dlambda
        if m in wanted:
            samples.append(x.copy())
        if m % trace_every == 0 or m == schedule.sweeps:
            trace.append((m, action_total(x, table, eqs, z)))
    stack = np.array(samples)
    chi = stack.mean(axis=0)
    sigma = stack.std(axis=0, ddof=1) if len(samples) > 1 else np.zeros_like(chi)
    if not np.all(np.isfinite(chi)):
        raise FloatingPointError("chain produced non-finite estimates")
    return MitigationResult(
        list(eqs.quantities), chi, sigma, z, acceptance, trace, lam, schedule,
        {"backend": backend or ("numba" if _numba_active() else "numpy")},
    )


def _numba_active() -> bool:
    from ._accel import USE_NUMBA

    return USE_NUMBA


def mitigate(
    table: MeasurementTable,
    graph: HierarchyGraph,
    h: Hamiltonian,
    r: int,
    schedule: AnnealSchedule,
    zmode: str = "next",
    z: float | None = None,
    backend: str | None = None,
) -> MitigationResult:
    """Compile Q_r equations over Q_{r+1}, pick z, and run the chain.

    ``table`` must cover Q_{r+1} (extra rows are ignored).  ``z`` overrides
    the hierarchy ratio when given.
    """
    while graph.depth < r + 1 and graph.grow():
        pass
    if zmode == "full":
        while graph.grow():
            pass
    eqs = compile_equations(h, graph, r, table.nT, table.T)
    sub = table.subset(eqs.quantities)
    zval = z_ratio(graph, r, zmode) if z is None else float(z)
    res = run_chain(sub, eqs, zval, schedule, backend=backend)
    res.meta.update(r=r, zmode=zmode, n_sources=eqs.n_sources, n_quantities=eqs.n_quantities)
    return res
