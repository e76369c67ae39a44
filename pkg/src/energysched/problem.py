"""Standard-form mixed-integer convex QP container.

    minimize    0.5 z'Qz + c'z + offset
    subject to  row_lower <= A z <= row_upper
                var_lower <= z <= var_upper
                z[i] in {0, 1}   for i in binary
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp


@dataclass(eq=False)
class MIQPProblem:
    Q: sp.csc_matrix
    c: np.ndarray
    A: sp.csr_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    var_lower: np.ndarray
    var_upper: np.ndarray
    binary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    offset: float = 0.0
    var_names: list[str] | None = None
    row_names: list[str] | None = None
    row_tags: list[str] | None = None
    var_map: dict | None = None
    layout: Any = None

    def __post_init__(self):
        n = len(self.c)
        self.Q = sp.csc_matrix(self.Q, shape=(n, n), dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        if self.A.shape[1] != n:
            if self.A.shape[0] == 0:
                self.A = sp.csr_matrix((0, n))
            else:
                raise ValueError(f"A has {self.A.shape[1]} columns, expected {n}")
        self.c = np.asarray(self.c, dtype=float)
        self.row_lower = np.asarray(self.row_lower, dtype=float).reshape(-1)
        self.row_upper = np.asarray(self.row_upper, dtype=float).reshape(-1)
        self.var_lower = np.asarray(self.var_lower, dtype=float).reshape(-1)
        self.var_upper = np.asarray(self.var_upper, dtype=float).reshape(-1)
        self.binary = np.asarray(self.binary, dtype=int).reshape(-1)
        if self.var_names is None:
            self.var_names = [f"z{i}" for i in range(n)]
        if self.row_names is None:
            self.row_names = [f"r{i}" for i in range(self.A.shape[0])]

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_bin(self) -> int:
        return len(self.binary)

    @property
    def n_cont(self) -> int:
        return self.n_vars - self.n_bin

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.Q @ z) + self.c @ z + self.offset)

    def max_violation(self, z, *, integrality: bool = False) -> float:
        """Largest absolute violation of rows, bounds and (optionally) integrality."""
        z = np.asarray(z, dtype=float)
        viol = 0.0
        if self.n_rows:
            Az = self.A @ z
            viol = max(viol, float(np.max(np.maximum(self.row_lower - Az, 0.0), initial=0.0)))
            viol = max(viol, float(np.max(np.maximum(Az - self.row_upper, 0.0), initial=0.0)))
        viol = max(viol, float(np.max(np.maximum(self.var_lower - z, 0.0), initial=0.0)))
        viol = max(viol, float(np.max(np.maximum(z - self.var_upper, 0.0), initial=0.0)))
        if integrality and self.n_bin:
            zb = z[self.binary]
            viol = max(viol, float(np.max(np.abs(zb - np.round(zb)))))
        return viol
