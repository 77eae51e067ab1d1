"""Minimal energy-dominant measures, densities and partition martingales."""
from __future__ import annotations

import warnings
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .errors import DominationError, EmptyFamilyError, LevelError
from .forms import TAU_ZERO, energy_measure


@dataclass
class DominantMeasure:
    """``nu = sum_i 2**-i mu<f_i>`` together with the family that built it."""

    nu_weights: np.ndarray
    family: list = field(repr=False)
    mix_weights: np.ndarray
    degenerate: bool = False

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.nu_weights, dtype=dtype)

    def positive(self, tau_zero=TAU_ZERO):
        """Mask of atoms on which ``nu`` is charged."""
        return self.nu_weights > tau_zero


def _weights(nu):
    return np.asarray(nu.nu_weights if isinstance(nu, DominantMeasure) else nu, dtype=float)


def build_medm(model, family):
    """Mix the energy measures of ``family`` with weights ``2**-1, 2**-2, ...``."""
    family = list(family)
    if not family:
        raise EmptyFamilyError("an energy-dominant measure needs a nonempty family")
    mix = 2.0 ** -np.arange(1, len(family) + 1)
    mus = np.stack([energy_measure(model, f) for f in family])
    nu = mix @ mus
    degenerate = not np.any(nu > TAU_ZERO)
    if degenerate:
        warnings.warn("every family member is energy-null; the mixed measure vanishes", RuntimeWarning)
    return DominantMeasure(nu, family, mix, degenerate)


def density(mu, nu, atoms=None, tau_zero=TAU_ZERO):
    """Radon-Nikodym density ``d mu / d nu`` atom by atom.

    Atoms where both measures vanish get the value 1 (``0/0 := 1``).
    A charge of ``mu`` on a ``nu``-null atom raises :class:`DominationError`.
    """
    mu = np.asarray(mu, dtype=float)
    nu = _weights(nu)
    null = nu <= tau_zero
    bad = np.flatnonzero(null & (np.abs(mu) > tau_zero))
    if bad.size:
        i = int(bad[0])
        raise DominationError(atoms[i] if atoms is not None else i, mu[i], nu[i])
    out = np.ones_like(mu)
    np.divide(mu, nu, out=out, where=~null)
    return out


def is_medm(candidate, model, test_family, tau_zero=TAU_ZERO):
    """Check domination and minimality of ``candidate`` against ``test_family``.

    Returns ``(ok, report)``. Domination: every ``mu<f>`` vanishes where the
    candidate does. Minimality: the candidate vanishes wherever the measure
    built from the test family does (the two zero sets must coincide).
    """
    cand = _weights(candidate)
    atoms = model.space.atoms
    reference = build_medm(model, test_family).nu_weights
    cand_null = cand <= tau_zero
    undominated = []
    for k, f in enumerate(test_family):
        mu = energy_measure(model, f)
        hit = np.flatnonzero(cand_null & (mu > tau_zero))
        undominated.extend((k, atoms[i]) for i in hit)
    excess = [atoms[i] for i in np.flatnonzero((reference <= tau_zero) & ~cand_null)]
    report = {
        "domination": not undominated,
        "minimality": not excess,
        "undominated": undominated,
        "excess_atoms": excess,
    }
    return (not undominated and not excess), report


class PartitionChain:
    """Nested partitions of the atoms; ``levels[k][x]`` is the block id of atom ``x``.

    Each level refines the previous one and the last level is the partition
    into singletons.
    """

    def __init__(self, levels):
        self.levels = [np.asarray(lv, dtype=int) for lv in levels]
        if not self.levels:
            raise ValueError("a partition chain needs at least one level")
        n = self.levels[0].size
        for lv in self.levels:
            if lv.shape != (n,):
                raise ValueError("every level must assign a block to each atom")
        for coarse, fine in zip(self.levels, self.levels[1:]):
            # each fine block must sit inside a single coarse block
            for b in np.unique(fine):
                if np.unique(coarse[fine == b]).size != 1:
                    raise ValueError("partition chain levels are not nested")
        if np.unique(self.levels[-1]).size != n:
            raise ValueError("the finest level must consist of singletons")

    def __len__(self):
        return len(self.levels)

    def to_json(self):
        return [lv.tolist() for lv in self.levels]

    @classmethod
    def sg_cells(cls, level):
        """Blocks of level-``k`` SG cells on the atoms of a level-``level`` model."""
        idx = np.arange(3 ** level)
        return cls([idx // 3 ** (level - k) for k in range(level + 1)])


def partition_densities(mu, nu, chain, level, tau_zero=TAU_ZERO):
    """Block-constant density ``sum_a mu(B_a)/nu(B_a) 1_{B_a}`` at ``level`` (``0/0 := 1``)."""
    if not 0 <= level < len(chain):
        raise LevelError(f"partition level {level} outside 0..{len(chain) - 1}")
    mu = np.asarray(mu, dtype=float)
    nu = _weights(nu)
    blocks = chain.levels[level]
    _, inv = np.unique(blocks, return_inverse=True)
    mu_b = np.bincount(inv, weights=mu)
    nu_b = np.bincount(inv, weights=nu)
    ratio = density(mu_b, nu_b, tau_zero=tau_zero)
    return ratio[inv]


def l1_distance(a, b, nu):
    """``sum_x nu(x) |a(x) - b(x)|``."""
    return float(np.sum(_weights(nu) * np.abs(np.asarray(a) - np.asarray(b))))


def partition_distances(mu, nu, chain, exact=False, tau_zero=TAU_ZERO):
    """L1(nu) distance between the level-``n`` density and the finest one, for every level.

    With ``exact=True`` the distances are evaluated in rational arithmetic on
    the given float weights and rounded once at the end, so equalities and
    the contraction ``d_{n+1} <= d_n`` survive without rounding noise.
    Atoms with ``nu <= tau_zero`` are null and carry no weight.
    """
    mu = np.asarray(mu, dtype=float)
    nu_w = _weights(nu)
    finest = density(mu, nu_w, tau_zero=tau_zero)  # raises on undominated charge
    if not exact:
        return np.array([l1_distance(partition_densities(mu, nu_w, chain, n, tau_zero), finest, nu_w)
                         for n in range(len(chain))])
    live = nu_w > tau_zero
    M = [Fraction(float(v)) if ok else Fraction(0) for v, ok in zip(mu, live)]
    N = [Fraction(float(v)) if ok else Fraction(0) for v, ok in zip(nu_w, live)]
    out = []
    for blocks in chain.levels:
        members = {}
        for x, b in enumerate(blocks.tolist()):
            members.setdefault(b, []).append(x)
        total = Fraction(0)
        for xs in members.values():
            s_mu, s_nu = sum(M[x] for x in xs), sum(N[x] for x in xs)
            if s_nu:
                # nu(x)|s_mu/s_nu - mu(x)/nu(x)| = |nu(x) s_mu - mu(x) s_nu| / s_nu
                total += sum(abs(N[x] * s_mu - M[x] * s_nu) for x in xs) / s_nu
        out.append(float(total))
    return np.array(out)
