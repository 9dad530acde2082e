"""Statevector and density-matrix Trotter simulation, shots, and measurement tables.

Basis index convention: site k (1-based) is bit ``nqubits - k`` of the basis
index, so dense operators agree with ``kron(sigma_1, sigma_2, ...)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import GuardError
from .hamiltonian import Hamiltonian
from .pauli import PauliString

MAX_DENSE_QUBITS = 12


# ---------------------------------------------------------------------------
# sparse Pauli action


@lru_cache(maxsize=4096)
def pauli_action(p: PauliString, nqubits: int) -> tuple[np.ndarray, np.ndarray]:
    """``(flip, phase)`` with ``P|b> = phase[b] |b ^ flip>`` as index arrays.

    Returns the target index array ``b ^ xmask`` and the complex phase per
    source basis state.
    """
    if p.max_site() > nqubits:
        raise ValueError(f"{p} does not fit on {nqubits} qubits")
    xm, zm = p.masks(nqubits)
    ny = sum(1 for a in p.axes if a == 2)
    b = np.arange(1 << nqubits, dtype=np.int64)
    parity = np.bitwise_count(b & zm) & 1
    phase = (1j**ny) * (1 - 2 * parity.astype(np.float64))
    target = b ^ xm
    target.setflags(write=False)
    phase.setflags(write=False)
    return target, phase


def apply_pauli(p: PauliString, psi: np.ndarray, nqubits: int) -> np.ndarray:
    """P applied along axis 0 of ``psi`` (vector or matrix rows)."""
    target, phase = pauli_action(p, nqubits)
    out = np.empty_like(psi, dtype=np.complex128)
    if psi.ndim == 1:
        out[target] = phase * psi
    else:
        out[target] = phase[:, None] * psi
    return out


def pauli_matrix(p: PauliString, nqubits: int) -> np.ndarray:
    target, phase = pauli_action(p, nqubits)
    dim = 1 << nqubits
    mat = np.zeros((dim, dim), dtype=np.complex128)
    mat[target, np.arange(dim)] = phase
    return mat


def dense_hamiltonian(h: Hamiltonian, t: float) -> np.ndarray:
    n = h.nqubits
    if n > MAX_DENSE_QUBITS:
        raise GuardError(f"dense Hamiltonian limited to {MAX_DENSE_QUBITS} qubits")
    mat = np.zeros((1 << n, 1 << n), dtype=np.complex128)
    target_cols = np.arange(1 << n)
    for idx, (s, _) in enumerate(h.terms):
        target, phase = pauli_action(s, n)
        mat[target, target_cols] += h.coupling_at(idx, t) * phase
    return mat


def rotate(p: PauliString, angle: float, psi: np.ndarray, nqubits: int) -> np.ndarray:
    """``exp(-i angle P) psi = cos(angle) psi - i sin(angle) P psi`` (axis 0)."""
    return np.cos(angle) * psi - 1j * np.sin(angle) * apply_pauli(p, psi, nqubits)


# ---------------------------------------------------------------------------
# states


def expectation(state: np.ndarray, p: PauliString, nqubits: int | None = None) -> float:
    """<P> for a statevector or density matrix, clamped to [-1, 1]."""
    dim = state.shape[0]
    n = nqubits if nqubits is not None else dim.bit_length() - 1
    if p.is_identity:
        return 1.0 if state.ndim == 1 else float(np.real(np.trace(state)))
    target, phase = pauli_action(p, n)
    if state.ndim == 1:
        val = np.vdot(state[target], phase * state)
    else:
        val = np.sum(phase * state[np.arange(dim), target])
    return float(np.clip(val.real, -1.0, 1.0))


def expectations(state: np.ndarray, strings: Sequence[PauliString], nqubits: int) -> np.ndarray:
    return np.array([expectation(state, p, nqubits) for p in strings])


def basis_state(bits: str) -> np.ndarray:
    """Computational basis state from a bit string, site 1 first."""
    psi = np.zeros(1 << len(bits), dtype=np.complex128)
    psi[int(bits, 2)] = 1.0
    return psi


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def ground_state(h: Hamiltonian, t: float = 0.0) -> tuple[np.ndarray, float]:
    """Ground state of H(t) and its energy.

    A degenerate lowest level (tolerance 1e-9 max(1, |E0|)) yields the
    normalised equal-weight sum of the eigensolver's orthonormal basis, each
    vector phased so its largest amplitude is real positive.
    """
    mat = dense_hamiltonian(h, t)
    if np.allclose(mat.imag, 0.0, atol=0.0):
        w, v = np.linalg.eigh(mat.real)
        v = v.astype(np.complex128)
    else:
        w, v = np.linalg.eigh(mat)
    e0 = float(w[0])
    tol = 1e-9 * max(1.0, abs(e0))
    deg = int(np.sum(w - e0 <= tol))
    psi = sum(_fix_phase(v[:, j]) for j in range(deg))
    psi = psi / np.linalg.norm(psi)
    return _fix_phase(psi), e0


# ---------------------------------------------------------------------------
# evolution


def _check_steps(nT: int, T: float) -> float:
    if nT < 1:
        raise ValueError("need at least one Trotter slice")
    if T <= 0:
        raise ValueError("total time must be positive")
    return T / nT


def trotter_slice(psi: np.ndarray, h: Hamiltonian, t: float, dt: float) -> np.ndarray:
    """One first-order slice at time t, terms applied in stored order."""
    n = h.nqubits
    for idx, (s, c) in enumerate(h.terms):
        angle = dt * c(t)
        if angle:
            psi = rotate(s, angle, psi, n)
    return psi


def trotter_evolve(psi0: np.ndarray, h: Hamiltonian, nT: int, T: float) -> list[np.ndarray]:
    """States at t_s = s T/nT, s = 0..nT, using couplings sampled at t_s."""
    dt = _check_steps(nT, T)
    norm = np.linalg.norm(psi0)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError("initial state is not normalised")
    out = [np.asarray(psi0, dtype=np.complex128)]
    psi = out[0]
    for s in range(1, nT + 1):
        psi = trotter_slice(psi, h, s * dt, dt)
        out.append(psi)
    return out


def depolarize(rho: np.ndarray, qubit: int, p: float, nqubits: int) -> np.ndarray:
    """Single-qubit depolarizing channel on site ``qubit`` (1-based).

    (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)
      = (1 - 4p/3) rho + (2p/3) Tr_k(rho) (x) I_k
    """
    if p == 0.0:
        return rho
    dim = 1 << nqubits
    t = rho.reshape((2,) * (2 * nqubits))
    ax = qubit - 1
    reduced = np.trace(t, axis1=ax, axis2=ax + nqubits)
    mixed = np.expand_dims(np.expand_dims(reduced, ax), ax + nqubits)
    eye = np.eye(2).reshape([2 if i in (ax, ax + nqubits) else 1 for i in range(2 * nqubits)])
    out = (1.0 - 4.0 * p / 3.0) * t + (2.0 * p / 3.0) * mixed * eye
    return out.reshape(dim, dim)


def _conjugate(rho: np.ndarray, s: PauliString, angle: float, n: int) -> np.ndarray:
    left = rotate(s, angle, rho, n)
    return rotate(s, angle, left.conj().T, n).conj().T


def noisy_evolve(
    psi0: np.ndarray, h: Hamiltonian, nT: int, T: float, p_dep: float
) -> list[np.ndarray]:
    """Density matrices at t_s with per-qubit depolarizing after each slice."""
    dt = _check_steps(nT, T)
    if not 0.0 <= p_dep <= 1.0:
        raise ValueError("p_dep must lie in [0, 1]")
    n = h.nqubits
    if n > MAX_DENSE_QUBITS:
        raise GuardError(f"density matrices limited to {MAX_DENSE_QUBITS} qubits")
    rho = np.outer(psi0, psi0.conj())
    out = [rho]
    for s in range(1, nT + 1):
        t = s * dt
        for idx, (string, c) in enumerate(h.terms):
            angle = dt * c(t)
            if angle:
                rho = _conjugate(rho, string, angle, n)
        for k in range(1, n + 1):
            rho = depolarize(rho, k, p_dep, n)
        rho = 0.5 * (rho + rho.conj().T)
        out.append(rho)
    return out


# ---------------------------------------------------------------------------
# measurements


@dataclass(frozen=True)
class NoiseSpec:
    p_dep: float = 0.0
    eta: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_dep <= 1.0:
            raise ValueError("p_dep must lie in [0, 1]")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")


def sample_shots(truth: float, nS: int, rng: np.random.Generator) -> float:
    """Average of nS single-shot +-1 outcomes with mean ``truth``."""
    if nS < 1:
        raise ValueError("nS must be >= 1")
    prob = min(1.0, max(0.0, 0.5 * (1.0 + truth)))
    k = rng.binomial(nS, prob)
    return 2.0 * k / nS - 1.0


def attenuate(noisy: float, ideal, eta: float, s: int):
    w = eta**s
    return (1.0 - w) * noisy + w * ideal


def modified_deviation(xbar, nS: int):
    """y = 1 - xbar^2, with saturated |xbar| = 1 pulled in by one opposite shot."""
    x = np.asarray(xbar, dtype=float)
    sat = np.abs(x) >= 1.0
    adj = np.where(sat, (nS * x - np.sign(x)) / (nS + 1), x)
    return 1.0 - adj**2


@dataclass
class MeasurementTable:
    """Noisy means ``xbar[q, s]`` and modified deviations ``y[q, s]``.

    Column ``s = 0`` is the exact initial-state value.
    """

    strings: list[PauliString]
    xbar: np.ndarray
    y: np.ndarray
    nS: int
    T: float
    meta: dict = field(default_factory=dict)

    @property
    def nT(self) -> int:
        return self.xbar.shape[1] - 1

    @property
    def dt(self) -> float:
        return self.T / self.nT

    @property
    def dx(self) -> float:
        return 2.0 / self.nS

    def index(self) -> dict[PauliString, int]:
        return {p: i for i, p in enumerate(self.strings)}

    def subset(self, strings: Sequence[PauliString]) -> "MeasurementTable":
        idx = self.index()
        rows = [idx[p] for p in strings]
        return MeasurementTable(list(strings), self.xbar[rows].copy(), self.y[rows].copy(), self.nS, self.T, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "s", "xbar", "y"])
        for q in range(self.xbar.shape[0]):
            for s in range(self.xbar.shape[1]):
                w.writerow([q, s, repr(float(self.xbar[q, s])), repr(float(self.y[q, s]))])
        return buf.getvalue()

    def meta_json(self) -> str:
        meta = dict(self.meta)
        meta.update(N_T=self.nT, N_S=self.nS, T=self.T, strings=[str(p) for p in self.strings])
        return json.dumps(meta, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, text: str, meta_text: str) -> "MeasurementTable":
        meta = json.loads(meta_text)
        strings = [PauliString.parse(s) for s in meta["strings"]]
        nT = int(meta["N_T"])
        xbar = np.zeros((len(strings), nT + 1))
        y = np.zeros_like(xbar)
        for row in csv.DictReader(io.StringIO(text)):
            q, s = int(row["q"]), int(row["s"])
            xbar[q, s] = float(row["xbar"])
            y[q, s] = float(row["y"])
        extra = {k: v for k, v in meta.items() if k not in ("N_T", "N_S", "T", "strings")}
        return cls(strings, xbar, y, int(meta["N_S"]), float(meta["T"]), extra)


def ideal_expectations(
    h: Hamiltonian, psi0: np.ndarray, strings: Sequence[PauliString], nT: int, T: float
) -> np.ndarray:
    states = trotter_evolve(psi0, h, nT, T)
    return np.array([expectations(st, strings, h.nqubits) for st in states]).T


def noisy_expectations(
    h: Hamiltonian, psi0: np.ndarray, strings: Sequence[PauliString], nT: int, T: float, p_dep: float
) -> np.ndarray:
    states = noisy_evolve(psi0, h, nT, T, p_dep)
    return np.array([expectations(st, strings, h.nqubits) for st in states]).T


def measure_table(
    h: Hamiltonian,
    strings: Sequence[PauliString],
    nT: int,
    T: float,
    nS: int,
    noise: NoiseSpec,
    psi0: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    ideal: np.ndarray | None = None,
    noisy: np.ndarray | None = None,
) -> MeasurementTable:
    """Shot-sampled, eta-attenuated measurement table over ``strings``.

    The noisy and ideal branches are sampled from two independent child
    streams of ``rng`` (default: seeded from ``noise.seed``), so the ideal
    samples do not depend on ``p_dep``.  Precomputed ``ideal``/``noisy``
    exact expectation arrays of shape ``(len(strings), nT + 1)`` may be passed.
    """
    strings = list(strings)
    if psi0 is None:
        psi0, _ = ground_state(h, 0.0)
    if ideal is None:
        ideal = ideal_expectations(h, psi0, strings, nT, T)
    if noisy is None:
        noisy = (
            ideal
            if noise.p_dep == 0.0
            else noisy_expectations(h, psi0, strings, nT, T, noise.p_dep)
        )
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    noisy_rng, ideal_rng = rng.spawn(2)
    nq = len(strings)
    xbar = np.empty((nq, nT + 1))
    xbar[:, 0] = ideal[:, 0]
    for s in range(1, nT + 1):
        for q in range(nq):
            a = sample_shots(noisy[q, s], nS, noisy_rng)
            b = sample_shots(ideal[q, s], nS, ideal_rng)
            xbar[q, s] = attenuate(a, b, noise.eta, s)
    y = modified_deviation(xbar, nS)
    meta = {"eta": noise.eta, "p_dep": noise.p_dep, "seed": noise.seed, "N_Q": h.nqubits}
    return MeasurementTable(strings, xbar, y, nS, T, meta)
