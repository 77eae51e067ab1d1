"""Weighted-graph backend: atoms are vertices, functions are vertex vectors."""
from __future__ import annotations

import numpy as np

from ..errors import BackendMismatchError
from .. import rng as _rng
from .base import AtomSpace, FormModel


class GraphForm(FormModel):
    """``E(f, g) = 1/2 sum_{x,y} c(x,y) (f(x)-f(y)) (g(x)-g(y))``.

    The energy measure of an atom collects every edge at that atom,
    ``mu<f>({x}) = sum_y c(x,y) (f(x)-f(y))**2``, so each edge is charged
    at both endpoints and the total mass is ``2 E(f)``.

    Isolated atoms are allowed (they are energy-null); generators only
    produce connected graphs.
    """

    kind = "graph"

    def __init__(self, space, conductances):
        if space.kind != "graph":
            raise ValueError("graph form needs a graph atom space")
        c = np.array(conductances, dtype=float)
        n = len(space)
        if c.shape != (n, n):
            raise ValueError(f"conductance matrix must be {n}x{n}")
        if not np.allclose(c, c.T, rtol=0.0, atol=0.0):
            raise ValueError("conductances must be symmetric")
        if np.any(np.diag(c) != 0):
            raise ValueError("conductances must vanish on the diagonal")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("conductances must be finite and nonnegative")
        c.setflags(write=False)
        self.space = space
        self.conductances = c

    @property
    def laplacian(self):
        c = self.conductances
        return np.diag(c.sum(axis=1)) - c

    def isolated_atoms(self):
        return [self.space.atoms[i] for i in np.flatnonzero(self.conductances.sum(axis=1) == 0)]

    def edges(self):
        """Upper-triangular edge list ``(i, j, c)``."""
        i, j = np.nonzero(np.triu(self.conductances))
        return [(int(a), int(b), float(self.conductances[a, b])) for a, b in zip(i, j)]

    def coerce(self, f):
        if not isinstance(f, (np.ndarray, list, tuple)):
            raise BackendMismatchError(f"graph model expects a vertex vector, got {type(f).__name__}")
        v = np.asarray(f, dtype=float)
        if v.shape != (self.n_atoms,):
            raise BackendMismatchError(
                f"graph function must have {self.n_atoms} values, got shape {v.shape}"
            )
        return v

    def constant(self, c):
        return np.full(self.n_atoms, float(c))

    def combine(self, coeffs, family):
        F = np.stack([self.coerce(f) for f in family])
        return np.asarray(coeffs, dtype=float) @ F

    def local_jets(self, family):
        F = np.stack([self.coerce(f) for f in family])  # (N, n)
        J = F.T[:, :, None] - F[None, :, :]  # J[x, i, y] = f_i(x) - f_i(y)
        return J, self.conductances

    def energy(self, f, g):
        return float(self.coerce(f) @ self.laplacian @ self.coerce(g))

    def indicator(self, atom):
        e = np.zeros(self.n_atoms)
        e[self.space.index(atom) if isinstance(atom, str) else int(atom)] = 1.0
        return e


def _graph_from_matrix(c, m=None, ids=None):
    n = c.shape[0]
    ids = ids or [f"v{i}" for i in range(n)]
    m = np.ones(n) if m is None else m
    return GraphForm(AtomSpace(tuple(ids), m, "graph"), c)


def path_graph(n=3, conductance=1.0):
    """Path ``v0 - v1 - ... - v{n-1}`` with unit masses."""
    c = np.zeros((n, n))
    for i in range(n - 1):
        c[i, i + 1] = c[i + 1, i] = conductance
    return _graph_from_matrix(c)


def complete_graph(n=3, conductance=1.0):
    c = np.full((n, n), float(conductance))
    np.fill_diagonal(c, 0.0)
    return _graph_from_matrix(c)


def random_graph(n, seed=0, extra=0.1, low=0.5, high=2.0):
    """Random connected graph: recursive tree plus independent chords.

    Vertex ``k`` attaches to a uniformly chosen earlier vertex, then every
    remaining pair becomes an edge with probability ``extra``. Conductances
    and base-measure weights are uniform on ``[low, high]``.
    """
    if n < 1:
        raise ValueError("need at least one vertex")
    gen = _rng.stream(seed, _rng.GENERATE, n)
    c = np.zeros((n, n))
    for k in range(1, n):
        j = int(gen.integers(k))
        c[k, j] = c[j, k] = gen.uniform(low, high)
    iu, ju = np.triu_indices(n, 1)
    draws = gen.random(iu.size)
    weights = gen.uniform(low, high, iu.size)
    for a, b, u, w in zip(iu, ju, draws, weights):
        if c[a, b] == 0.0 and u < extra:
            c[a, b] = c[b, a] = w
    m = gen.uniform(low, high, n)
    return _graph_from_matrix(c, m)


def e1_orthonormal_family(form, seed=0):
    """Seeded random basis of the vertex functions, orthonormal for ``E + L^2(m)``.

    A generic complete orthonormal system: every member has a nonzero
    difference along every edge, so the leading members already resolve
    the local difference directions at each vertex.
    """
    n = form.n_atoms
    B = _rng.stream(seed, _rng.FAMILY, n).standard_normal((n, n))
    inner = form.laplacian + np.diag(form.space.m_weights)
    R = np.linalg.cholesky(B @ inner @ B.T)
    F = np.linalg.solve(R, B)
    return [row for row in F]


def indicator_family(form):
    return [form.indicator(i) for i in range(form.n_atoms)]
