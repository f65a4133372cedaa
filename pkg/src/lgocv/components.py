"""Latent Gaussian components and their sparse precision blocks.

Each component contributes one diagonal block to the joint latent prior
precision.  Intrinsic components (rw1, rw2, besag) are rank deficient and
register sum-to-zero constraints per connected block.

Hyper-linked parameters are given as a hyperparameter name (string) and
resolved from the internal-scale hyperparameter dictionary; plain floats are
fixed values on the natural scale (precision, lag-one correlation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class ComponentError(ValueError):
    pass


def _resolve_log_prec(value, hyper):
    """Precision from a fixed natural-scale float or a log-precision hyper."""
    if isinstance(value, str):
        return float(np.exp(hyper[value]))
    tau = float(value)
    if tau <= 0:
        raise ComponentError("precision must be strictly positive")
    return tau


def _resolve_rho(value, hyper):
    """Lag-one correlation from a fixed float or an atanh-scale hyper."""
    if isinstance(value, str):
        return float(np.tanh(hyper[value]))
    rho = float(value)
    if not -1.0 < rho < 1.0:
        raise ComponentError("ar1 correlation must lie in (-1, 1)")
    return rho


@dataclass(frozen=True)
class FixedEffects:
    """Fixed-effects block with a proper vague Gaussian prior."""

    name: str
    size: int
    prec: float = 1e-4

    kind = "fixed"
    intrinsic = False
    hyper_names = ()

    def hypers(self):
        return ()

    def precision(self, hyper):
        return sp.identity(self.size, format="csc") * self.prec

    def log_det(self, hyper):
        return self.size * np.log(self.prec)

    def constraint_rows(self):
        return []


@dataclass(frozen=True)
class Iid:
    name: str
    size: int
    log_prec: float | str = 1.0

    kind = "iid"
    intrinsic = False

    def hypers(self):
        return (self.log_prec,) if isinstance(self.log_prec, str) else ()

    def precision(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        return sp.identity(self.size, format="csc") * tau

    def log_det(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        return self.size * np.log(tau)

    def constraint_rows(self):
        return []


@dataclass(frozen=True)
class Ar1:
    """Stationary AR(1) block parameterized by marginal precision and rho."""

    name: str
    size: int
    log_prec: float | str = 1.0
    rho: float | str = 0.0

    kind = "ar1"
    intrinsic = False

    def hypers(self):
        out = []
        if isinstance(self.log_prec, str):
            out.append(self.log_prec)
        if isinstance(self.rho, str):
            out.append(self.rho)
        return tuple(out)

    def precision(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        rho = _resolve_rho(self.rho, hyper)
        s = self.size
        if s == 1:
            return sp.csc_matrix(np.array([[tau]]))
        scale = tau / (1.0 - rho * rho)
        main = np.full(s, 1.0 + rho * rho)
        main[0] = main[-1] = 1.0
        off = np.full(s - 1, -rho)
        Q = sp.diags([off, main, off], [-1, 0, 1], format="csc") * scale
        return Q

    def log_det(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        rho = _resolve_rho(self.rho, hyper)
        # covariance is the Toeplitz rho^|i-j| / tau
        return self.size * np.log(tau) - (self.size - 1) * np.log1p(-rho * rho)

    def constraint_rows(self):
        return []


def _structure_logdet_plus(R):
    """Log pseudo-determinant of a fixed intrinsic structure matrix."""
    w = np.linalg.eigvalsh(R.toarray())
    tol = max(w.max(), 1.0) * 1e-10
    return float(np.sum(np.log(w[w > tol])))


@dataclass(frozen=True)
class Rw1:
    name: str
    size: int
    log_prec: float | str = 1.0
    cyclic: bool = False

    kind = "rw1"
    intrinsic = True
    null_dim = 1

    def hypers(self):
        return (self.log_prec,) if isinstance(self.log_prec, str) else ()

    @cached_property
    def _structure(self):
        s = self.size
        if self.cyclic:
            rows = np.repeat(np.arange(s), 2)
            cols = np.column_stack([np.arange(s), (np.arange(s) + 1) % s]).ravel()
            vals = np.tile([1.0, -1.0], s)
            D = sp.csc_matrix((vals, (rows, cols)), shape=(s, s))
        else:
            D = sp.diags([np.ones(s - 1), -np.ones(s - 1)], [0, 1],
                         shape=(s - 1, s), format="csc")
        return (D.T @ D).tocsc()

    def precision(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        return self._structure * tau

    def log_det(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        return (self.size - 1) * np.log(tau) + _structure_logdet_plus(self._structure)

    def constraint_rows(self):
        return [np.ones(self.size)]


@dataclass(frozen=True)
class Rw2:
    name: str
    size: int
    log_prec: float | str = 1.0

    kind = "rw2"
    intrinsic = True
    null_dim = 2

    def hypers(self):
        return (self.log_prec,) if isinstance(self.log_prec, str) else ()

    @cached_property
    def _structure(self):
        s = self.size
        if s < 3:
            raise ComponentError("rw2 needs size >= 3")
        D = sp.diags([np.ones(s - 2), -2.0 * np.ones(s - 2), np.ones(s - 2)],
                     [0, 1, 2], shape=(s - 2, s), format="csc")
        return (D.T @ D).tocsc()

    def precision(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        return self._structure * tau

    def log_det(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        return (self.size - 2) * np.log(tau) + _structure_logdet_plus(self._structure)

    def constraint_rows(self):
        return [np.ones(self.size)]


def read_graph(path):
    """Edge list ("node_a node_b" per line, 0-indexed) -> adjacency sets."""
    edges = []
    nmax = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ComponentError(f"{path}:{lineno}: expected 'node_a node_b'")
            a, b = int(parts[0]), int(parts[1])
            if a < 0 or b < 0 or a == b:
                raise ComponentError(f"{path}:{lineno}: invalid edge {a} {b}")
            edges.append((a, b))
            nmax = max(nmax, a, b)
    adj = [set() for _ in range(nmax + 1)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def _connected_blocks(adj):
    n = len(adj)
    seen = np.zeros(n, dtype=bool)
    blocks = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        blocks.append(sorted(comp))
    return blocks


@dataclass(frozen=True)
class Besag:
    """Unscaled ICAR block: degree on the diagonal, -1 for neighbours."""

    name: str
    adjacency: tuple
    log_prec: float | str = 1.0

    kind = "besag"
    intrinsic = True

    def __post_init__(self):
        object.__setattr__(self, "adjacency",
                           tuple(frozenset(a) for a in self.adjacency))

    @property
    def size(self):
        return len(self.adjacency)

    @property
    def null_dim(self):
        return len(self._blocks)

    def hypers(self):
        return (self.log_prec,) if isinstance(self.log_prec, str) else ()

    @cached_property
    def _blocks(self):
        return _connected_blocks(self.adjacency)

    @cached_property
    def _structure(self):
        s = self.size
        R = sp.lil_matrix((s, s))
        for i, nbrs in enumerate(self.adjacency):
            R[i, i] = len(nbrs)
            for j in nbrs:
                R[i, j] = -1.0
        return R.tocsc()

    def precision(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        return self._structure * tau

    def log_det(self, hyper):
        tau = _resolve_log_prec(self.log_prec, hyper)
        rank = self.size - self.null_dim
        return rank * np.log(tau) + _structure_logdet_plus(self._structure)

    def constraint_rows(self):
        rows = []
        for comp in self._blocks:
            v = np.zeros(self.size)
            v[comp] = 1.0
            rows.append(v)
        return rows


COMPONENT_KINDS = {
    "fixed": FixedEffects,
    "iid": Iid,
    "ar1": Ar1,
    "rw1": Rw1,
    "rw2": Rw2,
    "besag": Besag,
}
