"""BBGKY equations of Pauli-string correlators and the hierarchy they span."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import GuardError
from .hamiltonian import Hamiltonian
from .kernels import connected_labels
from .pauli import Kind, PauliString, bracket

MAX_PARTITION_QUBITS = 10


class HierarchyError(RuntimeError):
    pass


@dataclass(frozen=True)
class RhsTerm:
    target: PauliString
    term_index: int
    static_coefficient: int

    def coefficient_at(self, h: Hamiltonian, t: float) -> float:
        return self.static_coefficient * h.coupling_at(self.term_index, t)


@dataclass(frozen=True)
class BbgkyEquation:
    """d<source>/dt = sum_k coupling_k(t) * static_k * <target_k>."""

    source: PauliString
    rhs: tuple[RhsTerm, ...]

    def targets(self) -> set[PauliString]:
        return {r.target for r in self.rhs}

    def derivative(self, h: Hamiltonian, t: float, values: dict[PauliString, float]) -> float:
        return sum(r.coefficient_at(h, t) * values[r.target] for r in self.rhs)


def bbgky_equation(source: PauliString, h: Hamiltonian) -> BbgkyEquation:
    """Ehrenfest equation of ``<source>``: -i<[source, H]> written term by term.

    Each Hamiltonian string with an odd number of differing shared axes
    contributes ``h_B(t) f s_eps <target>``; the commutator is ``i f s_eps target``.
    """
    if source.is_identity:
        raise ValueError("the identity has no BBGKY equation")
    if source.max_site() > h.nqubits:
        raise ValueError(f"{source} lies outside {h.nqubits} qubits")
    rhs = []
    for idx, (b, _) in enumerate(h.terms):
        res = bracket(source, b, Kind.COMMUTATOR)
        if res.is_zero:
            continue
        # commutator coefficients are purely imaginary: i * f * s_eps
        assert res.re == 0
        rhs.append(RhsTerm(res.string, idx, res.im))
    return BbgkyEquation(source, tuple(rhs))


@dataclass
class HierarchyGraph:
    """Breadth-first expansion of Q_0 under immediate connections."""

    hamiltonian: Hamiltonian
    radius: dict[PauliString, int] = field(default_factory=dict)
    equations: dict[PauliString, BbgkyEquation] = field(default_factory=dict)
    layers: list[list[PauliString]] = field(default_factory=list)
    saturated_at: int | None = None

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def R(self) -> int | None:
        return self.saturated_at

    def Q(self, r: int) -> list[PauliString]:
        """Members within r connections, ordered by discovery."""
        if r > self.depth:
            if self.saturated_at is not None:
                r = self.depth
            else:
                raise HierarchyError(f"layer {r} not computed (depth {self.depth})")
        out: list[PauliString] = []
        for layer in self.layers[: r + 1]:
            out.extend(layer)
        return out

    def size(self, r: int) -> int:
        return len(self.Q(r))

    def census(self) -> list[dict]:
        return [{"r": r, "size": self.size(r)} for r in range(self.depth + 1)]

    @property
    def nodes(self) -> list[PauliString]:
        return self.Q(self.depth)

    def equation(self, p: PauliString) -> BbgkyEquation:
        eq = self.equations.get(p)
        if eq is None:
            eq = bbgky_equation(p, self.hamiltonian)
            self.equations[p] = eq
        return eq

    def grow(self) -> bool:
        """Add one layer; returns False when the expansion is already closed."""
        if self.saturated_at is not None:
            return False
        new: list[PauliString] = []
        seen = set(self.radius)
        for p in self.layers[-1]:
            for t in sorted(self.equation(p).targets()):
                if t not in seen:
                    seen.add(t)
                    new.append(t)
        if not new:
            self.saturated_at = self.depth
            return False
        r = self.depth + 1
        for t in new:
            self.radius[t] = r
        self.layers.append(new)
        return True

    def edges(self) -> set[tuple[PauliString, PauliString]]:
        """Undirected immediate connections among the graph's nodes.

        Built from the downstream targets of every node whose equation is
        computed; self-loops are kept.  Raises if the relation is asymmetric
        on nodes whose equations are both known.
        """
        nodes = set(self.radius)
        down: dict[PauliString, set[PauliString]] = {}
        for p in nodes:
            if p in self.equations or self.saturated_at is not None:
                down[p] = self.equation(p).targets()
        for a, targets in down.items():
            for b in targets:
                if b in down and a not in down[b]:
                    raise HierarchyError(f"asymmetric connection {a} -> {b}")
        out = set()
        for a, targets in down.items():
            for b in targets:
                if b in nodes:
                    out.add((a, b) if a <= b else (b, a))
        return out


def expand(q0: Iterable[PauliString], h: Hamiltonian, r: int) -> HierarchyGraph:
    q0 = list(dict.fromkeys(q0))
    if not q0:
        raise ValueError("Q_0 must be nonempty")
    if r < 0:
        raise ValueError("radius must be >= 0")
    for p in q0:
        if p.is_identity:
            raise ValueError("identity cannot be a hierarchy node")
    g = HierarchyGraph(h, radius={p: 0 for p in q0}, layers=[q0])
    while g.depth < r and g.grow():
        pass
    return g


def subhierarchy_radius(q0: Iterable[PauliString], h: Hamiltonian) -> tuple[int, list[PauliString], HierarchyGraph]:
    """Radius R at which Q_r stops growing, the closed set Q_R, and the graph."""
    g = expand(q0, h, 0)
    while g.grow():
        pass
    return g.R, g.Q(g.R), g


def z_ratio(graph: HierarchyGraph, r: int, mode: str = "next") -> float:
    if mode == "next":
        if graph.saturated_at is None and graph.depth < r + 1:
            raise HierarchyError(f"layer {r + 1} not computed")
        return graph.size(r) / graph.size(r + 1)
    if mode == "full":
        if graph.saturated_at is None:
            raise HierarchyError("subhierarchy radius not reached")
        return graph.size(r) / graph.size(graph.R)
    raise ValueError(f"unknown z mode {mode!r}")


# ---------------------------------------------------------------------------
# full partition over all 4^N - 1 strings


def string_id(p: PauliString, nqubits: int) -> int:
    x, z = p.masks(nqubits)
    return (x << nqubits) | z


def string_from_id(code: int, nqubits: int) -> PauliString:
    x, z = code >> nqubits, code & ((1 << nqubits) - 1)
    sites, axes = [], []
    for k in range(1, nqubits + 1):
        bit = 1 << (nqubits - k)
        xb, zb = bool(x & bit), bool(z & bit)
        if xb or zb:
            sites.append(k)
            axes.append(2 if xb and zb else (1 if xb else 3))
    return PauliString(tuple(sites), tuple(axes))


def connection_edges(h: Hamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """All immediate connections as (source id, target id) pairs.

    A string connects through term B exactly when the two anticommute, which
    on symplectic masks is an odd popcount of ``xa & zb ^ za & xb``; the
    target is the product string ``a ^ b``.
    """
    n = h.nqubits
    if n > MAX_PARTITION_QUBITS:
        raise GuardError(
            f"full-hierarchy partition needs 4^{n} strings; limited to {MAX_PARTITION_QUBITS} qubits"
        )
    ids = np.arange(1, 1 << (2 * n), dtype=np.int64)
    xa, za = ids >> n, ids & ((1 << n) - 1)
    src, dst = [], []
    for s, _ in h.terms:
        xb, zb = s.masks(n)
        odd = (np.bitwise_count((xa & zb) ^ (za & xb)) & 1).astype(bool)
        a = ids[odd]
        src.append(a)
        dst.append(a ^ string_id(s, n))
    return np.concatenate(src), np.concatenate(dst)


@dataclass
class Partition:
    nqubits: int
    labels: np.ndarray  # label per string id; index 0 (identity) is its own label

    def components(self) -> list[np.ndarray]:
        lab = self.labels[1:]
        order = np.argsort(lab, kind="stable")
        _, starts = np.unique(lab[order], return_index=True)
        return [order[a:b] + 1 for a, b in zip(starts, list(starts[1:]) + [len(order)])]

    def sizes(self) -> list[int]:
        return sorted(Counter(self.labels[1:].tolist()).values(), reverse=True)

    @property
    def count(self) -> int:
        """Components over the non-identity strings."""
        return len(set(self.labels[1:].tolist()))

    @property
    def count_with_identity(self) -> int:
        return self.count + 1

    def component_of(self, p: PauliString) -> list[PauliString]:
        lab = self.labels[string_id(p, self.nqubits)]
        members = np.nonzero(self.labels == lab)[0]
        return [string_from_id(int(c), self.nqubits) for c in members]

    def report(self) -> dict:
        sizes = self.sizes()
        return {
            "nqubits": self.nqubits,
            "components_non_identity": self.count,
            "components_with_identity": self.count_with_identity,
            "sizes": sizes,
            "total": int(sum(sizes)),
        }


def partition_full(h: Hamiltonian, backend: str | None = None) -> Partition:
    n = h.nqubits
    src, dst = connection_edges(h)
    labels = connected_labels(1 << (2 * n), src, dst, backend=backend)
    return Partition(n, labels)


# ---------------------------------------------------------------------------
# export


def export_graph(graph: HierarchyGraph, fmt: str = "json") -> str:
    nodes = graph.nodes
    idx = {p: i for i, p in enumerate(nodes)}
    edges = sorted(graph.edges(), key=lambda e: (idx[e[0]], idx[e[1]]))
    if fmt == "json":
        payload = {
            "nodes": [{"id": i, "string": str(p), "n": len(p), "r": graph.radius[p]} for i, p in enumerate(nodes)],
            "edges": [
                {"a": idx[a], "b": idx[b], "dn": abs(len(a) - len(b)), "r": min(graph.radius[a], graph.radius[b])}
                for a, b in edges
            ],
            "census": graph.census(),
            "R": graph.R,
        }
        return json.dumps(payload, indent=1)
    if fmt == "dot":
        lines = ["graph hierarchy {"]
        for i, p in enumerate(nodes):
            lines.append(f'  n{i} [label="{p}", n={len(p)}, r={graph.radius[p]}];')
        for a, b in edges:
            dn = abs(len(a) - len(b))
            r = min(graph.radius[a], graph.radius[b])
            lines.append(f"  n{idx[a]} -- n{idx[b]} [dn={dn}, r={r}, penwidth={1 + dn}];")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
