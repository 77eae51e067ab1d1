"""Gram fields, pointwise index, coordinate tuples and the gradient along them.

All per-atom linear algebra is batched over atoms sharing the same
pointwise index, so the work per atom does not depend on evaluation order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import rng as _rng
from .errors import DominationError, EmptyFamilyError, IllConditionedError, SamplingError
from .forms import (
    TAU_ZERO,
    SGForm,
    compose,
    energy,
    gram_measures,
    q_form,
)
from .medm import _weights

TOL_RANK = 1e-9
KAPPA_MAX = 1e8
R_MAX = 32


@dataclass
class GramField:
    """Per-atom matrices ``Z[x, i, j] = d mu<f_i, f_j> / d nu (x)``."""

    Z: np.ndarray
    nu: np.ndarray
    labels: list
    spanning: bool = True

    @property
    def n_atoms(self):
        return self.Z.shape[0]


@dataclass
class IndexField:
    """Pointwise index ``p(x)`` and the global index ``p``."""

    p_x: np.ndarray
    index: int
    nu: np.ndarray
    margin: np.ndarray
    lower_bound: bool = False
    tau_zero: float = TAU_ZERO

    @property
    def charged(self):
        return self.nu > self.tau_zero

    def stratum(self, r):
        """Atom indices of ``X(r)``."""
        return np.flatnonzero(self.p_x == r)

    def strata(self):
        return {r: self.stratum(r) for r in range(self.index + 1)}


@dataclass
class CoordinateTuple:
    """A ``p``-tuple ``g`` with its per-atom leading Gram blocks.

    ``Zg[x]`` is the full ``p x p`` density matrix of ``g`` at atom ``x``;
    only its leading ``p_x[x]`` block is used. ``chol[x]`` holds the Cholesky
    factor of the Jacobi-equilibrated leading block and ``scale[x]`` the
    equilibration, where defined.
    """

    g: list = field(repr=False)
    p_x: np.ndarray
    nu: np.ndarray = field(repr=False)
    Zg: np.ndarray = field(repr=False)
    cond: np.ndarray
    in_G: bool
    in_Ghat: bool
    kappa_max: float
    worst_atom: int
    coefficients: np.ndarray | None = field(default=None, repr=False)
    seed: int | None = None
    redraws: int = 0
    chol: list = field(default_factory=list, repr=False)
    scale: list = field(default_factory=list, repr=False)
    tau_zero: float = TAU_ZERO

    @property
    def p(self):
        return len(self.g)

    @property
    def charged(self):
        return self.nu > self.tau_zero


@dataclass
class GradientField:
    """``grad_g f`` per atom; components past ``p(x)`` are zero."""

    values: np.ndarray
    p_x: np.ndarray


def gram_field(model, family, nu, spanning=True, tau_zero=TAU_ZERO):
    """Densities of all mutual energy measures of ``family`` with respect to ``nu``."""
    family = list(family)
    if not family:
        raise EmptyFamilyError("a Gram field needs a nonempty family")
    nu_w = _weights(nu)
    G = gram_measures(model, family)
    _check_domination(G, nu_w, model, tau_zero)
    charged = nu_w > tau_zero
    Z = np.zeros_like(G)
    Z[charged] = G[charged] / nu_w[charged, None, None]
    Z = 0.5 * (Z + np.swapaxes(Z, 1, 2))
    return GramField(Z, nu_w, [f"f{i + 1}" for i in range(len(family))], spanning)


def _check_domination(G, nu_w, model, tau_zero):
    null = nu_w <= tau_zero
    if np.any(null):
        bad = np.abs(G[null]).reshape(int(null.sum()), -1).max(axis=1) > tau_zero
        if np.any(bad):
            i = int(np.flatnonzero(null)[np.flatnonzero(bad)[0]])
            raise DominationError(model.space.atoms[i], float(np.abs(G[i]).max()), float(nu_w[i]))


def pointwise_index(field, tol=TOL_RANK, tau_zero=TAU_ZERO):
    """Numerical rank of every ``Z(x)``: singular values above ``tol * sigma_max``.

    ``nu``-null atoms get ``p(x) = 0`` and are left out of the global index.
    ``margin[x]`` is the distance, in decades, from the rank cutoff to the
    nearest singular value; small margins flag atoms whose rank is fragile.
    """
    sv = np.abs(np.linalg.eigvalsh(field.Z))[:, ::-1]
    smax = sv[:, 0] if sv.shape[1] else np.zeros(field.n_atoms)
    cutoff = tol * smax
    p_x = np.sum(sv > cutoff[:, None], axis=1) * (smax > 0)
    charged = field.nu > tau_zero
    p_x = np.where(charged, p_x, 0).astype(int)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log10(sv) - np.log10(cutoff)[:, None]
    margin = np.full(field.n_atoms, np.inf)
    for x in np.flatnonzero(charged & (smax > 0)):
        margin[x] = np.min(np.abs(logs[x][np.isfinite(logs[x])]), initial=np.inf)
    index = int(p_x[charged].max()) if np.any(charged) else 0
    return IndexField(p_x, index, field.nu, margin, not field.spanning, tau_zero)


def _equilibrated_blocks(Zg, p_x, atoms_mask):
    """Condition numbers and Cholesky data of the leading blocks, batched by size."""
    n = Zg.shape[0]
    cond = np.ones(n)
    chol = [None] * n
    scale = [None] * n
    for r in np.unique(p_x[atoms_mask]):
        if r == 0:
            continue
        idx = np.flatnonzero(atoms_mask & (p_x == r))
        B = Zg[idx, :r, :r]
        d = np.sqrt(np.clip(np.einsum("xii->xi", B), 0.0, None))
        ok = np.all(d > 0, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            E = B / (d[:, :, None] * d[:, None, :])
        ev = np.linalg.eigvalsh(np.where(ok[:, None, None], E, np.eye(r)))
        c = np.where((ev[:, 0] > 0) & ok, ev[:, -1] / np.where(ev[:, 0] > 0, ev[:, 0], 1.0), np.inf)
        cond[idx] = c
        good = np.isfinite(c)
        if np.any(good):
            L = np.linalg.cholesky(E[good])
            dg = d[good]
            for j, x in enumerate(idx[good]):
                chol[x] = L[j]
                scale[x] = dg[j]
    return cond, chol, scale


def evaluate_tuple(model, g, nu, index_field, kappa_max=KAPPA_MAX, tau_zero=TAU_ZERO):
    """Membership diagnostics of ``g`` in the coordinate sets.

    ``in_G``: at every charged atom the leading ``p(x)`` block is invertible
    with (Jacobi-equilibrated) condition number at most ``kappa_max``.
    ``in_Ghat``: additionally every ``mu<g_i>`` charges every charged atom.
    """
    g = [model.coerce(f) for f in g]
    nu_w = _weights(nu)
    G = gram_measures(model, g)
    p = len(g)
    charged = nu_w > tau_zero
    _check_domination(G, nu_w, model, tau_zero)
    Zg = np.zeros_like(G)
    Zg[charged] = G[charged] / nu_w[charged, None, None]
    p_x = np.minimum(index_field.p_x, p)
    cond, chol, scale = _equilibrated_blocks(Zg, p_x, charged)
    in_G = bool(np.all(cond[charged] <= kappa_max))
    diag = np.einsum("xii->xi", G)
    in_Ghat = in_G and bool(np.all(diag[charged] > tau_zero))
    worst = int(np.argmax(np.where(charged, cond, -np.inf))) if np.any(charged) else 0
    return CoordinateTuple(
        g=g, p_x=p_x, nu=nu_w, Zg=Zg, cond=cond, in_G=in_G, in_Ghat=in_Ghat,
        kappa_max=kappa_max, worst_atom=worst, chol=chol, scale=scale, tau_zero=tau_zero,
    )


def sample_coordinates(model, family, nu, index_field, seed, kappa_max=KAPPA_MAX,
                       r_max=R_MAX, tau_zero=TAU_ZERO):
    """Draw ``g_k = sum_i a_i^(k) 2**(-i/2) f_i`` with standard-normal ``a``.

    Draw ``d`` uses the stream ``(seed, SAMPLE, d)``; redraws continue until
    the tuple lies in the smaller coordinate set or ``r_max`` draws are used.
    """
    family = list(family)
    p = index_field.index
    if p < 1:
        raise ValueError("the form has index 0; there is nothing to sample")
    decay = 2.0 ** (-np.arange(1, len(family) + 1) / 2.0)
    worst = (None, 0.0)
    for d in range(r_max):
        a = _rng.stream(seed, _rng.SAMPLE, d).standard_normal((p, len(family)))
        coeffs = a * decay
        g = [model.combine(c, family) for c in coeffs]
        tup = evaluate_tuple(model, g, nu, index_field, kappa_max, tau_zero)
        tup.coefficients = coeffs
        tup.seed = seed
        tup.redraws = d
        if tup.in_Ghat:
            return tup
        c = float(tup.cond[tup.worst_atom])
        if worst[0] is None or c > worst[1]:
            worst = (model.space.atoms[tup.worst_atom], c)
    raise SamplingError(r_max, worst[0], worst[1])


def _require_G(tup, model):
    if not tup.in_G:
        a = tup.worst_atom
        raise IllConditionedError(model.space.atoms[a], float(tup.cond[a]), tup.kappa_max)


def _solve_blocks(tup, rhs):
    """Solve ``Z_{g,r}(x) w = rhs[x, :r]`` by Cholesky on every charged atom with ``r >= 1``."""
    out = np.zeros((tup.Zg.shape[0], tup.p))
    for x in np.flatnonzero(tup.charged & (tup.p_x > 0)):
        r = tup.p_x[x]
        L, d = tup.chol[x], tup.scale[x]
        out[x, :r] = cho_solve((L, True), rhs[x, :r] / d) / d
    return out


def weighted_jets(model, family):
    """Local jets scaled by ``sqrt(weight)``: ``mu<f_i, f_j>({x}) = A[x, i] . A[x, j]``."""
    J, w = model.local_jets(list(family))
    return J * np.sqrt(w)[:, None, :]


def _groups(tup):
    for r in np.unique(tup.p_x[tup.charged]):
        yield int(r), np.flatnonzero(tup.charged & (tup.p_x == r))


def _lstsq_blocks(tup, target, G):
    """Least-squares coefficients of ``target[x]`` on the leading ``p(x)`` rows of ``G[x]``.

    The minimizer solves the same atom system ``Z_{g,r} w = u_r`` as
    :func:`_solve_blocks` but through a QR factorization of the jets, whose
    error grows with ``sqrt(cond Z)`` instead of ``cond Z``.
    """
    out = np.zeros((G.shape[0], tup.p))
    for r, idx in _groups(tup):
        if r == 0:
            continue
        A = np.swapaxes(G[idx, :r, :], 1, 2)  # (atoms, K, r)
        Q, R = np.linalg.qr(A)
        y = np.einsum("xkr,xk->xr", Q, target[idx])
        out[idx, :r] = np.linalg.solve(R, y[..., None])[..., 0]
    return out


def _densities(model, f, tup):
    """``d mu<f>/d nu`` and ``u[x, i] = d mu<f, g_i>/d nu`` on charged atoms."""
    A = weighted_jets(model, [f] + list(tup.g))
    af = A[:, 0, :]
    charged = tup.charged
    dff = np.zeros(A.shape[0])
    u = np.zeros((A.shape[0], tup.p))
    dff[charged] = np.einsum("xk,xk->x", af, af)[charged] / tup.nu[charged]
    u[charged] = np.einsum("xk,xik->xi", af, A[:, 1:, :])[charged] / tup.nu[charged, None]
    return dff, u


def gradient(model, f, tup, nu=None, method="qr"):
    """``grad_g f``: on ``X(r)`` the first ``r`` components solve ``Z_{g,r} w = u_r``.

    ``method="qr"`` (default) factors the weighted jets; ``"cholesky"``
    solves the density system directly with the tuple's stored factors.
    Both give the unique solution; the first is more accurate when
    ``Z_{g,r}`` is poorly conditioned.
    """
    _require_G(tup, model)
    f = model.coerce(f)
    if method == "cholesky":
        _, u = _densities(model, f, tup)
        return GradientField(_solve_blocks(tup, u), tup.p_x.copy())
    if method != "qr":
        raise ValueError(f"unknown method {method!r}")
    A = weighted_jets(model, [f] + list(tup.g))
    return GradientField(_lstsq_blocks(tup, A[:, 0, :], A[:, 1:, :]), tup.p_x.copy())


def schur_complement(model, f, tup, nu=None):
    """``d mu<f>/d nu - u_r^T Z_{g,r}^{-1} u_r`` per atom (zero off the charged atoms).

    This is the Schur complement of ``Z_{g,r}`` in the Gram matrix of
    ``(g_1, ..., g_r, f)``. It is computed from the last diagonal entry of
    the triangular factor of the bordered jets, which avoids subtracting
    two nearly equal numbers.
    """
    _require_G(tup, model)
    A = weighted_jets(model, list(tup.g) + [model.coerce(f)])
    out = np.zeros(A.shape[0])
    for r, idx in _groups(tup):
        cols = np.concatenate([A[idx, :r, :], A[idx, -1:, :]], axis=1)
        K = cols.shape[2]
        if K <= r:
            continue  # the first r jets already span every direction at x
        R = np.linalg.qr(np.swapaxes(cols, 1, 2), mode="r")
        out[idx] = R[:, r, r] ** 2 / tup.nu[idx]
    return out


def schur_residual(model, f, tup, nu=None):
    return np.abs(schur_complement(model, f, tup))


def remainder_density(model, f, tup, nu=None, grad=None, expanded=False):
    """Density at ``x`` of the energy of the first-order remainder ``R_x``.

    ``d mu<f>/d nu - 2 sum_i w_i u_i + sum_ij w_i w_j Z_g^{ij}`` with
    ``w = grad`` (by default the gradient along ``tup``). The default
    evaluates the same quantity in collected form,
    ``mu<f - sum_i w_i(x) g_i>({x}) / nu(x)``; ``expanded=True`` uses the
    three-term sum literally.
    """
    f = model.coerce(f)
    w = gradient(model, f, tup).values if grad is None else np.asarray(getattr(grad, "values", grad))
    mask = np.arange(tup.p)[None, :] < tup.p_x[:, None]
    w = np.where(mask, w, 0.0)
    if expanded:
        dff, u = _densities(model, f, tup)
        out = dff - 2.0 * np.einsum("xi,xi->x", w, u) + np.einsum("xi,xij,xj->x", w, tup.Zg, w)
    else:
        A = weighted_jets(model, [f] + list(tup.g))
        res = A[:, 0, :] - np.einsum("xi,xik->xk", w, A[:, 1:, :])
        out = np.zeros(A.shape[0])
        c = tup.charged
        out[c] = np.einsum("xk,xk->x", res, res)[c] / tup.nu[c]
    out[~tup.charged] = 0.0
    return out


def relative_contract(values, scale, tol=1e-8):
    """``|values| <= tol * (1 + scale)`` on every atom."""
    return bool(np.all(np.abs(values) <= tol * (1.0 + np.abs(scale))))


def energy_reconstruction(model, f, h, tup, nu=None):
    """Compare ``E(f, h)`` with ``1/2 sum_x nu(x) (Z_g grad f, grad h)``.

    Returns ``(lhs, rhs, relative_error)``; the error is taken relative to
    ``sqrt(E(f) E(h))``.
    """
    gf = gradient(model, f, tup).values
    gh = gradient(model, h, tup).values
    lhs = energy(model, f, h)
    rhs = 0.5 * float(np.sum(tup.nu * np.einsum("xi,xij,xj->x", gf, tup.Zg, gh)))
    scale = np.sqrt(abs(energy(model, f)) * abs(energy(model, h)))
    diff = abs(lhs - rhs)
    rel = 0.0 if diff == 0.0 else diff / max(scale, np.finfo(float).tiny)
    return lhs, rhs, rel


def derivation_check(form, psi, fs, tup, nu=None):
    """Max over atoms of ``|grad_g psi(f) - sum_i d_i psi(f) grad_g f_i|``.

    ``psi`` is a :class:`QuadPoly` in ``len(fs)`` variables; the composite must
    stay in the degree-2 span of the catalogue.
    """
    fs = [form.coerce(f) for f in fs]
    comp = compose(psi, fs)
    lhs = gradient(form, comp, tup).values
    vals = np.stack([f(form.centers) for f in fs], axis=-1)  # (atoms, k)
    dpsi = psi.grad(vals)
    grads = np.stack([gradient(form, f, tup).values for f in fs], axis=1)  # (atoms, k, p)
    rhs = np.einsum("xk,xkp->xp", dpsi, grads)
    err = np.linalg.norm(lhs - rhs, axis=1)
    err[~tup.charged] = 0.0
    return float(err.max())


def _orthonormal_generators(a1, a2):
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    q12 = q_form(a1, a2)
    if abs(q12) > 1e-12 * np.sqrt(q_form(a1, a1) * q_form(a2, a2)):
        warnings.warn("harmonic generators are not energy-orthogonal; reorthogonalizing", RuntimeWarning)
        a2 = a2 - q12 / q_form(a1, a1) * a1
    return a1 / np.sqrt(q_form(a1, a1)), a2 / np.sqrt(q_form(a2, a2))


def kusuoka_ratio_stats(levels, generators=None, threshold=0.1):
    """Eigenvalue-ratio statistics of the 2x2 cell matrices of two harmonic generators.

    With ``nu = (mu<h1> + mu<h2>)/2`` each cell ``K_w`` carries the matrix
    ``Z(K_w) = mu<h_i, h_j>(K_w) / nu(K_w)``. For every level returns the
    ``nu``-weighted mean of ``lambda_2 / lambda_1`` and the ``nu``-mass
    fraction of cells whose ratio is below ``threshold``.
    """
    if generators is None:
        generators = ((1.0, -1.0, 0.0), (1.0, 1.0, -2.0))
    a1, a2 = _orthonormal_generators(*generators)
    stats = []
    for n in levels:
        form = SGForm(n)
        G = gram_measures(form, [a1, a2])
        nu = 0.5 * (G[:, 0, 0] + G[:, 1, 1])
        Z = G / nu[:, None, None]
        ev = np.linalg.eigvalsh(Z)
        ratio = ev[:, 0] / ev[:, 1]
        stats.append({
            "level": int(n),
            "cells": int(form.n_atoms),
            "mean_ratio": float(np.sum(nu * ratio) / np.sum(nu)),
            "small_fraction": float(np.sum(nu[ratio < threshold]) / np.sum(nu)),
            "min_rank": int(np.min(np.sum(ev > 1e-12 * ev[:, -1:], axis=1))),
            "max_rank": int(np.max(np.sum(ev > 1e-12 * ev[:, -1:], axis=1))),
        })
    return stats
