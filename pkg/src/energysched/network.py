"""Flow-network model of a batch manufacturing plant.

Buffers are nodes, processes are edges carrying material between buffers at a
rate (units/hour), and products leave final buffers through delivery edges.
The structural matrices follow the usual state-space convention

    x(k+1) = A x(k) + B u(k) + E d(k)

with ``A`` the identity (no yield losses).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DanglingReference,
    DimensionMismatch,
    DuplicateId,
    FinalBufferWithoutProduct,
    IntermediateBufferWithDelivery,
    InvalidParameter,
)

SOURCE = "SOURCE"

INTERMEDIATE = "intermediate"
FINAL = "final"


@dataclass(frozen=True)
class BufferSpec:
    id: int
    x_min: float
    x_max: float
    kind: str = INTERMEDIATE


@dataclass(frozen=True)
class ProcessSpec:
    """A processing edge. ``origin`` is a buffer id or :data:`SOURCE`."""

    id: int
    origin: int | str
    destination: int
    machine: int
    u_min: float
    u_max: float
    energy_intensity: float


@dataclass(frozen=True)
class ProductSpec:
    id: int
    final_buffer: int
    goal: float


@dataclass(frozen=True, eq=False)
class ManufacturingNetwork:
    buffers: tuple[BufferSpec, ...]
    processes: tuple[ProcessSpec, ...]
    products: tuple[ProductSpec, ...]
    machines: tuple[int, ...]
    B: sp.csr_matrix
    E: sp.csr_matrix
    B_o: sp.csr_matrix
    M: sp.csr_matrix
    C: sp.csr_matrix
    _buffer_index: dict = field(repr=False)
    _process_index: dict = field(repr=False)
    _product_index: dict = field(repr=False)

    @property
    def n_x(self) -> int:
        return len(self.buffers)

    @property
    def n_u(self) -> int:
        return len(self.processes)

    @property
    def n_d(self) -> int:
        return len(self.products)

    @property
    def n_m(self) -> int:
        return len(self.machines)

    @property
    def A(self) -> sp.csr_matrix:
        return sp.identity(self.n_x, format="csr")

    @property
    def x_min(self) -> np.ndarray:
        return np.array([b.x_min for b in self.buffers], dtype=float)

    @property
    def x_max(self) -> np.ndarray:
        return np.array([b.x_max for b in self.buffers], dtype=float)

    @property
    def u_min(self) -> np.ndarray:
        return np.array([p.u_min for p in self.processes], dtype=float)

    @property
    def u_max(self) -> np.ndarray:
        return np.array([p.u_max for p in self.processes], dtype=float)

    @property
    def energy_intensity(self) -> np.ndarray:
        return np.array([p.energy_intensity for p in self.processes], dtype=float)

    @property
    def goals(self) -> np.ndarray:
        return np.array([p.goal for p in self.products], dtype=float)

    def buffer_index(self, buffer_id: int) -> int:
        return self._buffer_index[buffer_id]

    def process_index(self, process_id: int) -> int:
        return self._process_index[process_id]

    def product_index(self, product_id: int) -> int:
        return self._product_index[product_id]

    def dense(self, name: str) -> np.ndarray:
        """Dense copy of one of the structural matrices (``"A"``, ``"B"``, ...)."""
        return getattr(self, name).toarray()

    def energy(self, u) -> np.ndarray:
        """Energy drawn (kWh) for rate vector(s) ``u``; last axis is the process axis."""
        return np.asarray(u, dtype=float) @ self.energy_intensity


def _check_unique(ids, what):
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateId(f"duplicate {what} id {i!r}")
        seen.add(i)


def build_network(
    buffers: Sequence[BufferSpec],
    processes: Sequence[ProcessSpec],
    products: Sequence[ProductSpec],
) -> ManufacturingNetwork:
    """Validate the plant description and assemble its incidence matrices.

    Entities are ordered by id; row/column ``i`` of every matrix refers to the
    ``i``-th smallest id. Machines are the distinct machine ids referenced by
    the processes.
    """
    buffers = tuple(sorted(buffers, key=lambda b: b.id))
    processes = tuple(sorted(processes, key=lambda p: p.id))
    products = tuple(sorted(products, key=lambda p: p.id))
    _check_unique([b.id for b in buffers], "buffer")
    _check_unique([p.id for p in processes], "process")
    _check_unique([p.id for p in products], "product")

    bidx = {b.id: i for i, b in enumerate(buffers)}
    pidx = {p.id: j for j, p in enumerate(processes)}
    didx = {p.id: q for q, p in enumerate(products)}

    for b in buffers:
        if b.kind not in (INTERMEDIATE, FINAL):
            raise InvalidParameter(f"buffer {b.id}: unknown kind {b.kind!r}")
        if not (0 <= b.x_min <= b.x_max):
            raise InvalidParameter(
                f"buffer {b.id}: need 0 <= x_min <= x_max, got x_min={b.x_min}, x_max={b.x_max}"
            )
    for p in processes:
        if p.origin != SOURCE and p.origin not in bidx:
            raise DanglingReference(f"process {p.id}: origin buffer {p.origin!r} does not exist")
        if p.destination not in bidx:
            raise DanglingReference(
                f"process {p.id}: destination buffer {p.destination!r} does not exist"
            )
        if p.origin == p.destination:
            raise InvalidParameter(f"process {p.id}: origin equals destination")
        if not (0 <= p.u_min <= p.u_max):
            raise InvalidParameter(
                f"process {p.id}: need 0 <= u_min <= u_max, got u_min={p.u_min}, u_max={p.u_max}"
            )
        if p.energy_intensity < 0:
            raise InvalidParameter(f"process {p.id}: negative energy intensity")

    delivered_from: dict[int, int] = {}
    for d in products:
        if d.final_buffer not in bidx:
            raise DanglingReference(
                f"product {d.id}: final buffer {d.final_buffer!r} does not exist"
            )
        if d.goal < 0:
            raise InvalidParameter(f"product {d.id}: negative goal")
        buf = buffers[bidx[d.final_buffer]]
        if buf.kind != FINAL:
            raise IntermediateBufferWithDelivery(
                f"product {d.id} is delivered from intermediate buffer {buf.id}"
            )
        if d.final_buffer in delivered_from:
            raise InvalidParameter(
                f"final buffer {d.final_buffer} delivers products "
                f"{delivered_from[d.final_buffer]} and {d.id}"
            )
        delivered_from[d.final_buffer] = d.id
    for b in buffers:
        if b.kind == FINAL and b.id not in delivered_from:
            raise FinalBufferWithoutProduct(f"final buffer {b.id} has no product delivery")

    machines = tuple(sorted({p.machine for p in processes}))
    midx = {m: r for r, m in enumerate(machines)}
    n_x, n_u, n_d, n_m = len(buffers), len(processes), len(products), len(machines)

    rows, cols, vals = [], [], []
    for j, p in enumerate(processes):
        rows.append(bidx[p.destination])
        cols.append(j)
        vals.append(1.0)
        if p.origin != SOURCE:
            rows.append(bidx[p.origin])
            cols.append(j)
            vals.append(-1.0)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(n_x, n_u))
    # minimum() may share index arrays with B, so prune a private copy
    B_o = B.minimum(0).tocsr().copy()
    B_o.eliminate_zeros()

    E = sp.csr_matrix(
        ([-1.0] * n_d, ([bidx[d.final_buffer] for d in products], list(range(n_d)))),
        shape=(n_x, n_d),
    )
    M = sp.csr_matrix(
        ([1.0] * n_u, ([midx[p.machine] for p in processes], list(range(n_u)))),
        shape=(n_m, n_u),
    )
    C = coupling_from_assignment(M)

    return ManufacturingNetwork(
        buffers=buffers,
        processes=processes,
        products=products,
        machines=machines,
        B=B,
        E=E,
        B_o=B_o,
        M=M,
        C=C,
        _buffer_index=bidx,
        _process_index=pidx,
        _product_index=didx,
    )


def coupling_from_assignment(M) -> sp.csr_matrix:
    """Process coupling matrix: 1 where two distinct processes share a machine."""
    M = sp.csr_matrix(M)
    C = (M.T @ M).tolil()
    C.setdiag(0)
    C = C.tocsr()
    C.eliminate_zeros()
    C.data[:] = 1.0
    return C


def coupled_groups(network: ManufacturingNetwork) -> list[tuple[int, ...]]:
    """Partition process *indices* into maximal same-machine groups.

    Groups come out in order of their smallest member, singletons included.
    Derived from the coupling matrix via connected components, so it works for
    any symmetric coupling pattern, not only the machine map.
    """
    n = network.n_u
    if n == 0:
        return []
    C = network.C + sp.identity(n, format="csr")
    _, labels = sp.csgraph.connected_components(C, directed=False)
    groups: dict[int, list[int]] = {}
    for j, lab in enumerate(labels):
        groups.setdefault(lab, []).append(j)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def coupled_group_ids(network: ManufacturingNetwork) -> list[tuple[int, ...]]:
    """Same as :func:`coupled_groups` but reported with process ids."""
    return [tuple(network.processes[j].id for j in g) for g in coupled_groups(network)]


def step_dynamics(network: ManufacturingNetwork, x, u, d) -> np.ndarray:
    """Advance buffer levels by one step: ``x + B u + E d`` (no clipping)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != (network.n_x,) or u.shape != (network.n_u,) or d.shape != (network.n_d,):
        raise DimensionMismatch(
            f"expected shapes ({network.n_x},), ({network.n_u},), ({network.n_d},); "
            f"got {x.shape}, {u.shape}, {d.shape}"
        )
    return x + network.B @ u + network.E @ d
