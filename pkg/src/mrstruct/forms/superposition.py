"""Superposition backend on ``[-1, 1]^n``: bulk cells plus cells of the hyperplane ``y = 0``.

Energy:

    E(f, g) = 1/2 int grad f . grad g dx dy
            + 1/2 int_{y=0} sum_{k<n} d_k f d_k g dx,

both integrals by the midpoint rule on a uniform grid. Coordinates are
ordered ``(x_1, ..., x_{n-1}, y)``. Functions are polynomials of degree at
most two, built from a fixed catalogue with exact gradients.
"""
from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np

from ..errors import BackendMismatchError, CatalogueError, CompositeError
from .base import AtomSpace, FormModel


class QuadPoly:
    """``c + b . z + z^T S z`` with ``S`` symmetric."""

    __slots__ = ("dim", "const", "lin", "quad")

    def __init__(self, dim, const=0.0, lin=None, quad=None):
        self.dim = int(dim)
        self.const = float(const)
        self.lin = np.zeros(dim) if lin is None else np.asarray(lin, dtype=float).copy()
        q = np.zeros((dim, dim)) if quad is None else np.asarray(quad, dtype=float)
        self.quad = 0.5 * (q + q.T)
        if self.lin.shape != (dim,) or self.quad.shape != (dim, dim):
            raise ValueError("coefficient shapes do not match the dimension")

    @classmethod
    def variable(cls, dim, k):
        lin = np.zeros(dim)
        lin[k] = 1.0
        return cls(dim, lin=lin)

    @property
    def degree(self):
        if np.any(self.quad != 0):
            return 2
        if np.any(self.lin != 0):
            return 1
        return 0

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return self.const + z @ self.lin + np.einsum("...i,ij,...j->...", z, self.quad, z)

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        return self.lin + 2.0 * z @ self.quad

    def _check(self, other):
        if not isinstance(other, QuadPoly) or other.dim != self.dim:
            raise BackendMismatchError("polynomials of different dimensions")

    def __add__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return QuadPoly(self.dim, self.const + other, self.lin, self.quad)
        if not isinstance(other, QuadPoly):
            return NotImplemented
        self._check(other)
        return QuadPoly(self.dim, self.const + other.const, self.lin + other.lin, self.quad + other.quad)

    __radd__ = __add__

    def __neg__(self):
        return QuadPoly(self.dim, -self.const, -self.lin, -self.quad)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            c = float(other)
            return QuadPoly(self.dim, c * self.const, c * self.lin, c * self.quad)
        if not isinstance(other, QuadPoly):
            return NotImplemented
        self._check(other)
        if self.degree + other.degree > 2:
            raise CompositeError("product leaves the degree-2 catalogue span")
        return QuadPoly(
            self.dim,
            self.const * other.const,
            self.const * other.lin + other.const * self.lin,
            self.const * other.quad + other.const * self.quad + np.outer(self.lin, other.lin),
        )

    __rmul__ = __mul__

    def __repr__(self):
        return f"QuadPoly(dim={self.dim}, const={self.const}, lin={self.lin.tolist()}, quad={self.quad.tolist()})"


def variable_names(dim):
    return [f"x{k + 1}" for k in range(dim - 1)] + ["y"]


def catalogue(dim):
    """Coordinate functions then quadratic monomials, keyed by name."""
    names = variable_names(dim)
    out = {}
    for k, name in enumerate(names):
        out[name] = QuadPoly.variable(dim, k)
    for i, j in combinations_with_replacement(range(dim), 2):
        name = f"{names[i]}^2" if i == j else f"{names[i]}*{names[j]}"
        out[name] = QuadPoly.variable(dim, i) * QuadPoly.variable(dim, j)
    return out


def compose(psi, fs):
    """``psi(f_1, ..., f_k)`` for a degree-2 ``psi`` in ``k`` variables."""
    if psi.dim != len(fs):
        raise ValueError("psi arity does not match the number of functions")
    dim = fs[0].dim
    out = QuadPoly(dim, psi.const)
    for i, f in enumerate(fs):
        out = out + psi.lin[i] * f
    for i in range(len(fs)):
        for j in range(len(fs)):
            if psi.quad[i, j] != 0:
                out = out + psi.quad[i, j] * (fs[i] * fs[j])
    return out


class SuperpositionForm(FormModel):
    """Bulk Dirichlet energy plus a tangential energy on the hyperplane ``y = 0``.

    ``grid`` cells per axis; it must be even so that no bulk cell is cut by
    the hyperplane. Bulk atoms carry their volume as base measure, surface
    atoms carry none (Lebesgue measure of the hyperplane is zero).
    """

    kind = "superposition"

    def __init__(self, dim=2, grid=32):
        if dim < 2:
            raise ValueError("superposition model needs dim >= 2")
        if grid < 2 or grid % 2:
            raise ValueError("grid must be a positive even number of cells per axis")
        self.dim = int(dim)
        self.grid = int(grid)
        h = 2.0 / grid
        axis = -1.0 + h * (np.arange(grid) + 0.5)
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        self.bulk_centers = np.stack([m.ravel() for m in mesh], axis=-1)
        self.bulk_volumes = np.full(len(self.bulk_centers), h ** dim)
        smesh = np.meshgrid(*([axis] * (dim - 1)), indexing="ij")
        xs = np.stack([m.ravel() for m in smesh], axis=-1)
        self.surface_centers = np.hstack([xs, np.zeros((len(xs), 1))])
        self.surface_volumes = np.full(len(xs), h ** (dim - 1))
        self.n_bulk = len(self.bulk_centers)
        self.n_surface = len(self.surface_centers)
        self.centers = np.vstack([self.bulk_centers, self.surface_centers])
        self.is_surface = np.r_[np.zeros(self.n_bulk, bool), np.ones(self.n_surface, bool)]
        ids = [f"b{i}" for i in range(self.n_bulk)] + [f"s{i}" for i in range(self.n_surface)]
        m = np.r_[self.bulk_volumes, np.zeros(self.n_surface)]
        self.space = AtomSpace(tuple(ids), m, "superposition")
        self.catalogue = catalogue(self.dim)

    def coerce(self, f):
        if isinstance(f, str):
            try:
                return self.catalogue[f]
            except KeyError:
                raise CatalogueError(f"unknown catalogue id {f!r}") from None
        if not isinstance(f, QuadPoly):
            raise BackendMismatchError(
                f"superposition model expects a catalogue id or QuadPoly, got {type(f).__name__}"
            )
        if f.dim != self.dim:
            raise BackendMismatchError(f"dimension {f.dim} function on a dimension-{self.dim} model")
        return f

    def constant(self, c):
        return QuadPoly(self.dim, c)

    def default_family(self):
        return list(self.catalogue.values())

    def local_jets(self, family):
        grads = np.stack([self.coerce(f).grad(self.centers) for f in family], axis=1)  # (atoms, N, n)
        w = np.empty((self.n_atoms, self.dim))
        w[: self.n_bulk] = self.bulk_volumes[:, None]
        w[self.n_bulk:, :-1] = self.surface_volumes[:, None]
        w[self.n_bulk:, -1] = 0.0
        return grads, w

    def energy(self, f, g):
        f = self.coerce(f)
        g = self.coerce(g)
        bulk = np.sum(self.bulk_volumes * np.sum(f.grad(self.bulk_centers) * g.grad(self.bulk_centers), axis=1))
        fs = f.grad(self.surface_centers)[:, :-1]
        gs = g.grad(self.surface_centers)[:, :-1]
        surf = np.sum(self.surface_volumes * np.sum(fs * gs, axis=1))
        return float(0.5 * (bulk + surf))


def superposition_density(form, f, g, atom):
    """Closed-form density of ``mu<f, g>`` at an atom center.

    Bulk atoms: ``grad f . grad g``; surface atoms: the tangential part only.
    """
    f = form.coerce(f)
    g = form.coerce(g)
    i = form.space.index(atom) if isinstance(atom, str) else int(atom)
    z = form.centers[i]
    gf, gg = f.grad(z), g.grad(z)
    if form.is_surface[i]:
        return float(gf[:-1] @ gg[:-1])
    return float(gf @ gg)
