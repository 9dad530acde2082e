"""End-to-end runs of one model: simulate, mitigate over r, score."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .hamiltonian import Hamiltonian, Observable, build_current, build_schwinger
from .hierarchy import HierarchyGraph, subhierarchy_radius, z_ratio
from .metrics import FitResult, Trajectory, assemble_observable, fit_quadratic, l_norm, p_metric
from .mitigation import AnnealSchedule, MitigationResult, mitigate
from .simulator import (
    MeasurementTable,
    NoiseSpec,
    ground_state,
    ideal_expectations,
    measure_table,
    noisy_expectations,
)

# Proposal width used by the presets.  The shot spacing 2/N_S is too short a
# step for the chain to leave a [-2, 2] hot start within 10^4 sweeps.
PRESET_PROPOSAL_SCALE = 0.02
PRESET_P_DEP = 0.1
REALIZATIONS = [(0.1, 0.1), (0.1, 0.2), (0.5, 0.1), (0.5, 0.2)]


def split_seed(master: int, name: str) -> int:
    """Child seed for subsystem ``name``: SeedSequence([master, crc32(name)]).

    Stable across runs and platforms; distinct names give independent streams.
    Subsystems used here: ``"shots"`` and ``"chain/r<r>"``.
    """
    ss = np.random.SeedSequence([int(master), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class ModelSpec:
    nqubits: int = 8
    omega: float = 1.0
    m: float = 0.5
    mu5: float = 0.2

    def hamiltonian(self) -> Hamiltonian:
        return _schwinger(self.nqubits, self.omega, self.m, self.mu5)

    def current(self) -> Observable:
        return build_current(self.nqubits, self.omega)


@lru_cache(maxsize=16)
def _schwinger(n, omega, m, mu5) -> Hamiltonian:
    return build_schwinger(n, omega, m, mu5)


@dataclass
class Simulation:
    """Exact and noisy data of one model, shared by every r and seed."""

    hamiltonian: Hamiltonian
    observable: Observable
    T: float
    nT: int
    p_dep: float
    graph: HierarchyGraph
    psi0: np.ndarray
    ideal: np.ndarray  # Q_R x (nT + 1), Trotterized with nT slices
    noisy: np.ndarray  # same grid, density-matrix evolution
    ed: Trajectory  # observable from the nT run
    ED: Trajectory  # observable from the ed_factor * nT run, on the coarse grid

    @property
    def strings(self):
        return self.graph.Q(self.graph.R)

    @property
    def L_trotter(self) -> float:
        return l_norm(self.ed, self.ED)[0]


def simulate(
    h: Hamiltonian,
    J: Observable,
    T: float = 3.0,
    nT: int = 10,
    p_dep: float = PRESET_P_DEP,
    ed_factor: int = 10,
) -> Simulation:
    _, _, graph = subhierarchy_radius(J.strings, h)
    strings = graph.Q(graph.R)
    psi0, _ = ground_state(h, 0.0)
    ideal = ideal_expectations(h, psi0, strings, nT, T)
    noisy = ideal if p_dep == 0 else noisy_expectations(h, psi0, strings, nT, T, p_dep)
    fine = ideal_expectations(h, psi0, J.strings, nT * ed_factor, T)
    ED = assemble_observable(fine, J.coefficients, T, label="ED").downsample(ed_factor)
    ed = assemble_observable(ideal[: len(J.strings)], J.coefficients, T, label="ed")
    return Simulation(h, J, T, nT, p_dep, graph, psi0, ideal, noisy, ed, ED)


def simulate_model(model: ModelSpec, **kw) -> Simulation:
    return simulate(model.hamiltonian(), model.current(), **kw)


def noisy_table(sim: Simulation, noise_seed: int, nS: int = 10_000, eta: float = 0.9) -> MeasurementTable:
    noise = NoiseSpec(sim.p_dep, eta, split_seed(noise_seed, "shots"))
    return measure_table(
        sim.hamiltonian, sim.strings, sim.nT, sim.T, nS, noise,
        psi0=sim.psi0, ideal=sim.ideal, noisy=sim.noisy,
    )


def current_of(values: np.ndarray, strings, J: Observable, T: float, errors=None, label="") -> Trajectory:
    idx = {p: i for i, p in enumerate(strings)}
    rows = [idx[p] for p in J.strings]
    err = None if errors is None else np.asarray(errors)[rows]
    return assemble_observable(np.asarray(values)[rows], J.coefficients, T, err, label)


def noisy_current(table: MeasurementTable, J: Observable) -> Trajectory:
    # per-quantity error: shot standard error sqrt((1 - xbar^2) / N_S), zero at the exact s = 0
    err = np.sqrt(np.clip(1.0 - table.xbar**2, 0.0, None) / table.nS)
    err[:, 0] = 0.0
    return current_of(table.xbar, table.strings, J, table.T, err, "Noisy")


@dataclass
class RadiusOutcome:
    r: int
    z: float
    z_full: float
    result: MitigationResult
    current: Trajectory
    L: tuple[float, float]
    P: tuple[float, float]


@dataclass
class RealizationRun:
    sim: Simulation
    noise_seed: int
    chain_seed: int
    table: MeasurementTable
    noisy: Trajectory
    L_noisy: tuple[float, float]
    P_noisy: tuple[float, float]
    fit_ED: FitResult
    fit_noisy: FitResult
    radii: list[RadiusOutcome] = field(default_factory=list)
    labels: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for o in self.radii:
            out.append({
                **self.labels,
                "r": o.r, "noise_seed": self.noise_seed, "chain_seed": self.chain_seed,
                "z_next": o.z, "z_full": o.z_full,
                "L_trotter": self.sim.L_trotter,
                "L_noisy": self.L_noisy[0], "L_noisy_err": self.L_noisy[1],
                "L_mh": o.L[0], "L_mh_err": o.L[1],
                "P_noisy": self.P_noisy[0], "P_noisy_err": self.P_noisy[1],
                "P_mh": o.P[0], "P_mh_err": o.P[1],
                "final_acceptance": float(o.result.acceptance[-1]),
            })
        return out


def run_realization(
    sim: Simulation,
    noise_seed: int,
    chain_seed: int | None = None,
    radii=(0, 1, 2, 3),
    schedule: AnnealSchedule | None = None,
    nS: int = 10_000,
    eta: float = 0.9,
    zmode: str = "next",
    tmax: float = 1.2,
    backend: str | None = None,
    labels: dict | None = None,
) -> RealizationRun:
    """Sample one noisy table and mitigate it at every radius in ``radii``.

    Chain seeds are ``split_seed(chain_seed, "chain/r<r>")``; ``chain_seed``
    defaults to ``noise_seed``.
    """
    chain_seed = noise_seed if chain_seed is None else chain_seed
    schedule = schedule or AnnealSchedule(proposal_scale=PRESET_PROPOSAL_SCALE)
    J = sim.observable
    table = noisy_table(sim, noise_seed, nS, eta)
    noisy = noisy_current(table, J)
    fit_ED = fit_quadratic(sim.ED, tmax)
    fit_noisy = fit_quadratic(noisy, tmax)
    run = RealizationRun(
        sim, noise_seed, chain_seed, table, noisy, l_norm(noisy, sim.ED),
        p_metric(fit_noisy, fit_ED), fit_ED, fit_noisy, labels=dict(labels or {}),
    )
    for r in radii:
        sched = replace(schedule, seed=split_seed(chain_seed, f"chain/r{r}"))
        res = mitigate(table, sim.graph, sim.hamiltonian, r, sched, zmode=zmode, backend=backend)
        traj = current_of(res.chi, res.quantities, J, sim.T, res.sigma, "MH")
        run.radii.append(RadiusOutcome(
            r, res.z, z_ratio(sim.graph, r, "full"), res, traj,
            l_norm(traj, sim.ED), p_metric(fit_quadratic(traj, tmax), fit_ED),
        ))
    return run
