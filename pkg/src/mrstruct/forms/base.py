"""Atom spaces and the common interface of the three form backends."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("graph", "sg-cells", "superposition")

# absolute threshold under which an atom weight counts as zero
TAU_ZERO = 1e-14


@dataclass(frozen=True)
class AtomSpace:
    """Finite measure space standing in for ``(X, m)``.

    Parameters
    ----------
    atoms : tuple of str
        Ordered, unique atom ids.
    m_weights : ndarray
        Base-measure weight of each atom.
    kind : str
        Backend tag, one of ``KINDS``.
    """

    atoms: tuple
    m_weights: np.ndarray = field(repr=False)
    kind: str

    def __post_init__(self):
        atoms = tuple(str(a) for a in self.atoms)
        m = np.asarray(self.m_weights, dtype=float)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "m_weights", m)
        if self.kind not in KINDS:
            raise ValueError(f"unknown atom-space kind {self.kind!r}")
        if m.shape != (len(atoms),):
            raise ValueError("one base-measure weight per atom required")
        if len(set(atoms)) != len(atoms):
            raise ValueError("atom ids must be unique")
        if not np.all(np.isfinite(m)):
            raise ValueError("base-measure weights must be finite")
        # hyperplane atoms of the superposition model carry no Lebesgue mass
        if self.kind == "superposition":
            if np.any(m < 0):
                raise ValueError("base-measure weights must be nonnegative")
        elif np.any(m <= 0):
            raise ValueError("base measure must charge every atom")

    def __len__(self):
        return len(self.atoms)

    def index(self, atom_id):
        try:
            return self.atoms.index(str(atom_id))
        except ValueError:
            raise KeyError(f"unknown atom {atom_id!r}") from None


class FormModel:
    """Finite Dirichlet-form model.

    Subclasses describe energy measures through *local jets*: for a family
    ``f_1..f_N`` they return ``J`` of shape ``(atoms, N, K)`` and nonnegative
    weights ``w`` of shape ``(atoms, K)`` such that

        mu<f_i, f_j>({x}) = sum_k J[x, i, k] * J[x, j, k] * w[x, k].

    Energies are computed by each backend through its own formula so that
    the total-mass identity stays a genuine check.
    """

    kind: str
    space: AtomSpace

    def coerce(self, f):
        """Validate ``f`` for this model and return its canonical form."""
        raise NotImplementedError

    def local_jets(self, family):
        raise NotImplementedError

    def energy(self, f, g):
        raise NotImplementedError

    def constant(self, c):
        """The constant function ``c * 1``."""
        raise NotImplementedError

    def combine(self, coeffs, family):
        """Linear combination ``sum_i coeffs[i] * family[i]``."""
        family = [self.coerce(f) for f in family]
        out = self.constant(0.0)
        for c, f in zip(coeffs, family):
            out = out + float(c) * f
        return out

    @property
    def n_atoms(self):
        return len(self.space)


def gram_measures(model, family):
    """Per-atom matrix of mutual energy measures, shape ``(atoms, N, N)``."""
    J, w = model.local_jets(family)
    return np.einsum("xik,xk,xjk->xij", J, w, J)


def energy(model, f, g=None):
    """Bilinear form ``E(f, g)``; ``g`` defaults to ``f``."""
    return float(model.energy(f, f if g is None else g))


def energy_measure(model, f):
    """Per-atom energy measure ``mu<f>``; total mass is ``2 E(f)``."""
    J, w = model.local_jets([f])
    return np.einsum("xk,xk->x", J[:, 0, :] ** 2, w)


def mutual_energy_measure(model, f, g):
    """Per-atom signed measure ``mu<f, g>`` from the direct bilinear formula."""
    J, w = model.local_jets([f, g])
    return np.einsum("xk,xk,xk->x", J[:, 0, :], J[:, 1, :], w)


def polarized_measure(model, f, g):
    """``(mu<f+g> - mu<f> - mu<g>) / 2``, the polarization route."""
    f = model.coerce(f)
    g = model.coerce(g)
    return 0.5 * (energy_measure(model, f + g) - energy_measure(model, f) - energy_measure(model, g))
