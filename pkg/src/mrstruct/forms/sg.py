"""Sierpinski-gasket backend: atoms are the ``3**n`` cells of level ``n``.

Functions are piecewise harmonic: an :class:`SGFunction` of level ``m``
stores its values on the level-``m`` vertices and is harmonic inside every
level-``m`` cell. Level 0 is the three-dimensional space of harmonic
functions, given by their boundary values.

Energy uses the standard renormalization ``r = 3/5``:

    E(f, g) = (5/3)**m * sum over level-m cells of Q(corners f, corners g),
    Q(a, b) = sum_{i<j} (a_i - a_j) (b_i - b_j),

and the cell measure of ``K_w`` at level ``n >= m`` is
``2 * (5/3)**n * Q(A_w a, A_w b)`` where ``a, b`` are the corner values on
the level-``m`` ancestor, so the total mass is ``2 E``.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np

from ..errors import BackendMismatchError, LevelError
from .base import AtomSpace, FormModel

RENORM = 5.0 / 3.0
PAIRS = ((0, 1), (0, 2), (1, 2))

# level-1 vertices: q0, q1, q2, then the midpoints m01, m12, m02
_LEVEL1_EDGES = (
    (0, 3), (0, 5), (3, 5),
    (1, 3), (1, 4), (3, 4),
    (2, 5), (2, 4), (5, 4),
)
_LEVEL1_CELLS = ((0, 3, 5), (3, 1, 4), (5, 4, 2))


def derive_sg_extension_matrices():
    """Harmonic extension matrices ``A_0, A_1, A_2``.

    Minimizes the unit-conductance level-1 energy over the three midpoint
    values for each boundary basis vector. Row ``k`` of ``A_i`` gives the
    value at corner ``k`` of cell ``i`` in terms of ``(q0, q1, q2)``.
    """
    lap = np.zeros((6, 6))
    for a, b in _LEVEL1_EDGES:
        lap[a, a] += 1.0
        lap[b, b] += 1.0
        lap[a, b] -= 1.0
        lap[b, a] -= 1.0
    inner, bdry = [3, 4, 5], [0, 1, 2]
    block = lap[np.ix_(inner, inner)]
    if abs(np.linalg.det(block)) < 1e-12:
        raise ArithmeticError("singular interior system in harmonic extension")
    interior = -np.linalg.solve(block, lap[np.ix_(inner, bdry)])
    ext = np.vstack([np.eye(3), interior])
    return tuple(ext[list(cell)] for cell in _LEVEL1_CELLS)


EXTENSION = derive_sg_extension_matrices()
for _A in EXTENSION:
    _A.setflags(write=False)


def q_form(a, b):
    """Level-0 energy ``Q(a, b)`` along the last axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return sum((a[..., i] - a[..., j]) * (b[..., i] - b[..., j]) for i, j in PAIRS)


@lru_cache(maxsize=None)
def vertex_table(level):
    """Level-``level`` vertices and cell corner indices.

    Returns ``(coords, cells)``: integer coordinates (scaled by ``2**level``)
    of every vertex, and an int array of shape ``(3**level, 3)`` listing the
    corner vertices of each cell in lexicographic word order. Vertices
    ``0, 1, 2`` are the boundary points ``q0, q1, q2``.
    """
    s = 2 ** level
    corners = np.array([[[0, 0], [s, 0], [0, s]]])
    for _ in range(level):
        c0, c1, c2 = corners[:, 0], corners[:, 1], corners[:, 2]
        m01, m12, m02 = (c0 + c1) // 2, (c1 + c2) // 2, (c0 + c2) // 2
        children = np.stack(
            [np.stack([c0, m01, m02], 1), np.stack([m01, c1, m12], 1), np.stack([m02, m12, c2], 1)],
            axis=1,
        )
        corners = children.reshape(-1, 3, 2)
    index = {}
    cells = np.empty(corners.shape[:2], dtype=int)
    for w, cell in enumerate(corners):
        for k, pt in enumerate(map(tuple, cell)):
            cells[w, k] = index.setdefault(pt, len(index))
    coords = np.array(sorted(index, key=index.get))
    coords.setflags(write=False)
    cells.setflags(write=False)
    return coords, cells


def n_vertices(level):
    return (3 ** (level + 1) + 3) // 2


def cell_words(level):
    return ["".join(w) for w in product("012", repeat=level)]


def extend_corners(corners, steps):
    """Corner values of all descendants ``steps`` levels down.

    ``corners`` has shape ``(cells, ..., 3)``; each step maps a cell with
    corners ``c`` to its children ``A_0 c, A_1 c, A_2 c`` (word order).
    """
    c = np.asarray(corners, dtype=float)
    for _ in range(steps):
        c = np.stack([c @ A.T for A in EXTENSION], axis=1)
        c = c.reshape((-1,) + c.shape[2:])
    return c


class SGFunction:
    """Piecewise-harmonic function given by its level-``level`` vertex values."""

    __slots__ = ("level", "values")

    def __init__(self, level, values):
        values = np.asarray(values, dtype=float)
        if level < 0:
            raise LevelError("level must be nonnegative")
        if values.shape != (n_vertices(level),):
            raise ValueError(f"level-{level} function needs {n_vertices(level)} vertex values")
        self.level = int(level)
        self.values = values

    @classmethod
    def harmonic(cls, boundary):
        return cls(0, boundary)

    @classmethod
    def tent(cls, level, vertex):
        v = np.zeros(n_vertices(level))
        v[vertex] = 1.0
        return cls(level, v)

    def refine(self, level):
        """Same function, represented on level-``level`` vertices."""
        if level < self.level:
            raise LevelError(f"cannot coarsen a level-{self.level} function to level {level}")
        if level == self.level:
            return self
        _, cells = vertex_table(self.level)
        corners = extend_corners(self.values[cells], level - self.level)
        _, fine_cells = vertex_table(level)
        out = np.empty(n_vertices(level))
        out[fine_cells] = corners
        return SGFunction(level, out)

    def corners(self, level):
        """Corner values of every level-``level`` cell, shape ``(3**level, 3)``."""
        if level < self.level:
            raise LevelError(f"level-{self.level} function is not harmonic on level-{level} cells")
        _, cells = vertex_table(self.level)
        return extend_corners(self.values[cells], level - self.level)

    def _binary(self, other, op):
        if isinstance(other, SGFunction):
            lv = max(self.level, other.level)
            return SGFunction(lv, op(self.refine(lv).values, other.refine(lv).values))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, c):
        if isinstance(c, (int, float, np.floating, np.integer)):
            return SGFunction(self.level, float(c) * self.values)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return SGFunction(self.level, -self.values)

    def __repr__(self):
        return f"SGFunction(level={self.level}, values={self.values!r})"


class SGForm(FormModel):
    """Harmonic structure on the Sierpinski gasket, cells of level ``level``."""

    kind = "sg"

    def __init__(self, level):
        if level < 0:
            raise LevelError("SG level must be nonnegative")
        self.level = int(level)
        words = cell_words(self.level)
        self.cell_words = words
        self.extension_matrices = EXTENSION
        self.space = AtomSpace(
            tuple("w" + w for w in words), np.full(len(words), 3.0 ** -self.level), "sg-cells"
        )

    def coerce(self, f):
        if isinstance(f, SGFunction):
            g = f
        elif isinstance(f, (np.ndarray, list, tuple)) and np.shape(f) == (3,):
            g = SGFunction.harmonic(f)
        else:
            raise BackendMismatchError(
                f"SG model expects an SGFunction or boundary values in R^3, got {type(f).__name__}"
            )
        if g.level > self.level:
            raise LevelError(f"level-{g.level} function on a level-{self.level} cell model")
        return g

    def constant(self, c):
        return SGFunction(0, np.full(3, float(c)))

    def combine(self, coeffs, family):
        family = [self.coerce(f) for f in family]
        lv = max(f.level for f in family)
        V = np.stack([f.refine(lv).values for f in family])
        return SGFunction(lv, np.asarray(coeffs, dtype=float) @ V)

    def local_jets(self, family):
        C = np.stack([self.coerce(f).corners(self.level) for f in family], axis=1)
        J = np.stack([C[..., i] - C[..., j] for i, j in PAIRS], axis=-1)  # (cells, N, 3)
        w = np.full((self.n_atoms, 3), 2.0 * RENORM ** self.level)
        return J, w

    def energy(self, f, g):
        f = self.coerce(f)
        g = self.coerce(g)
        lv = max(f.level, g.level)
        _, cells = vertex_table(lv)
        fv = f.refine(lv).values[cells]
        gv = g.refine(lv).values[cells]
        return float(RENORM ** lv * np.sum(q_form(fv, gv)))

    def harmonic_family(self):
        return [SGFunction.harmonic(e) for e in np.eye(3)]

    def spline_family(self, level):
        if level > self.level:
            raise LevelError("spline level above the cell level")
        return [SGFunction.tent(level, v) for v in range(n_vertices(level))]

    def default_family(self, spline_level=1):
        return self.harmonic_family() + self.spline_family(min(spline_level, self.level))


def sg_cell_energy_measure(form, a, b):
    """Signed cell measure ``mu<h_a, h_b>`` of two harmonic functions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (3,) or b.shape != (3,):
        raise ValueError("harmonic functions are given by three boundary values")
    ca = extend_corners(a[None, :], form.level)
    cb = extend_corners(b[None, :], form.level)
    return 2.0 * RENORM ** form.level * q_form(ca, cb)


def sg_pwh_energy_measure(form, f, level=None):
    """Cell energy measure at ``level`` (default: the form's) of a piecewise-harmonic ``f``."""
    n = form.level if level is None else int(level)
    if not isinstance(f, SGFunction):
        raise BackendMismatchError("expected an SGFunction")
    if n < f.level:
        raise LevelError(f"measure level {n} below the function level {f.level}")
    c = f.corners(n)
    return 2.0 * RENORM ** n * q_form(c, c)
