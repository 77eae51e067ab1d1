"""Reversible jump chains on graph forms and their martingale additive functionals.

The chain attached to a :class:`GraphForm` jumps from ``x`` to ``y`` at rate
``q(x, y) = c(x, y) / m(x)``; its Dirichlet form is the graph energy. Every
martingale handled here is a finite sum ``M = sum_k phi_k . M^[f_k]`` and is
therefore described by two arrays:

* the jump kernel ``J(x, y) = sum_k phi_k(x) (f_k(y) - f_k(x))``, the jump of
  ``M`` when the chain moves from ``x`` to ``y``;
* the compensator rate ``K(x) = sum_y q(x, y) J(x, y)``, subtracted along
  holding intervals so that ``M`` is a martingale.

Pathwise values are exact: between jumps every functional is linear in time.
Stochastic integrals use the pre-jump state (predictable version).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import IllConditionedError, RepresentationError
from .forms import GraphForm
from .riemann import _lstsq_blocks, _solve_blocks, weighted_jets


class ChainModel:
    """Continuous-time jump chain whose Dirichlet form is ``graph``."""

    def __init__(self, graph):
        if not isinstance(graph, GraphForm):
            raise TypeError("jump chains are defined on graph forms only")
        self.graph = graph
        self.m = np.asarray(graph.space.m_weights, dtype=float)
        if np.any(self.m <= 0):
            raise ValueError("every atom needs a positive base measure")
        self.c = graph.conductances
        self.q = self.c / self.m[:, None]
        self.rates = self.q.sum(axis=1)
        flux = self.m[:, None] * self.q
        if not np.allclose(flux, flux.T, rtol=1e-14, atol=0.0):
            raise ValueError("chain is not reversible with respect to m")
        with np.errstate(invalid="ignore", divide="ignore"):
            self._jump_cdf = np.cumsum(self.q, axis=1) / self.rates[:, None]

    @property
    def n_atoms(self):
        return self.q.shape[0]

    @property
    def stationary(self):
        return self.m / self.m.sum()

    def generator(self, f):
        """``Lf(x) = sum_y q(x, y) (f(y) - f(x))``."""
        f = self.graph.coerce(f)
        return self.q @ f - self.rates * f


@dataclass
class PathRecord:
    """Jump times ``0 = t_0 < t_1 < ... <= T`` and the states entered at them."""

    times: np.ndarray
    states: np.ndarray
    horizon: float
    seed: int | None = None
    path_id: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=int)
        if self.times.shape != self.states.shape or self.times.size == 0 or self.times[0] != 0.0:
            raise ValueError("a path starts at time 0 and lists one state per jump time")
        if np.any(np.diff(self.times) <= 0) or self.times[-1] > self.horizon:
            raise ValueError("jump times must increase strictly and stay within the horizon")

    @classmethod
    def from_jumps(cls, start, jumps, horizon):
        """Path from a start state and ``[(time, state), ...]`` jumps."""
        times = [0.0] + [float(t) for t, _ in jumps]
        states = [int(start)] + [int(s) for _, s in jumps]
        return cls(np.array(times), np.array(states), float(horizon))

    @property
    def n_jumps(self):
        return self.states.size - 1

    def holding_times(self):
        return np.diff(np.r_[self.times, self.horizon])

    def occupation(self, n_atoms):
        """Time spent in every atom up to the horizon."""
        return np.bincount(self.states, weights=self.holding_times(), minlength=n_atoms)


def _initial_state(chain, init, gen):
    if isinstance(init, str):
        if init == "stationary":
            p = chain.stationary
        else:
            raise ValueError(f"unknown initial distribution {init!r}")
    elif np.ndim(init) == 0:
        return int(init)
    else:
        p = np.asarray(init, dtype=float)
        p = p / p.sum()
    return int(np.searchsorted(np.cumsum(p), gen.random() * p.sum(), side="right").clip(0, len(p) - 1))


def simulate_path(chain, seed, T, init="stationary", path_id=0):
    """One trajectory on ``[0, T]`` from the stream ``(seed, PATH, path_id)``.

    ``init`` is ``"stationary"`` (``m`` normalized), an atom index or a
    probability vector. Atoms with zero total rate are absorbing.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    gen = _rng.stream(seed, _rng.PATH, path_id)
    x = _initial_state(chain, init, gen)
    times, states = [0.0], [x]
    t = 0.0
    while chain.rates[x] > 0:
        t += gen.exponential(1.0 / chain.rates[x])
        if t >= T:
            break
        y = int(np.searchsorted(chain._jump_cdf[x], gen.random(), side="right"))
        x = min(y, chain.n_atoms - 1)
        while chain.q[states[-1], x] <= 0:  # guard against cdf round-off at the top end
            x -= 1
        times.append(t)
        states.append(x)
    return PathRecord(np.array(times), np.array(states), float(T), seed, path_id)


def _simulate_chunk(args):
    chain, seed, T, init, ids = args
    return [simulate_path(chain, seed, T, init, i) for i in ids]


def simulate_paths(chain, seed, T, n_paths, init="stationary", workers=1):
    """``n_paths`` independent trajectories; identical for every worker count."""
    ids = list(range(n_paths))
    if workers <= 1 or n_paths < 2 * workers:
        return _simulate_chunk((chain, seed, T, init, ids))
    chunks = [ids[k::workers] for k in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_simulate_chunk, [(chain, seed, T, init, c) for c in chunks]))
    out = [None] * n_paths
    for c, paths in zip(chunks, parts):
        for i, p in zip(c, paths):
            out[i] = p
    return out


@dataclass
class MAFSpec:
    """``sum_k phi_k . M^[f_k]`` with per-atom weights ``phi_k``."""

    terms: list = field(default_factory=list)

    @classmethod
    def fukushima(cls, f):
        f = np.asarray(f, dtype=float)
        return cls([(np.ones(f.size), f)])

    @classmethod
    def zero(cls, n_atoms):
        return cls([(np.zeros(n_atoms), np.zeros(n_atoms))])

    def scaled(self, c):
        return MAFSpec([(c * np.asarray(phi, float), f) for phi, f in self.terms])

    def kernel(self, chain):
        """Jump kernel ``J`` and compensator rate ``K``."""
        n = chain.n_atoms
        J = np.zeros((n, n))
        for phi, f in self.terms:
            phi = np.asarray(phi, dtype=float)
            f = chain.graph.coerce(f)
            if phi.shape != (n,) or not np.all(np.isfinite(phi)):
                raise ValueError("integrands must be finite and given per atom")
            J += phi[:, None] * (f[None, :] - f[:, None])
        J = np.where(chain.c > 0, J, 0.0)
        K = np.sum(chain.q * J, axis=1)
        return J, K

    def revuz_density(self, chain):
        """``mu<M>({x}) = sum_y c(x, y) J(x, y)**2``."""
        J, _ = self.kernel(chain)
        return np.sum(chain.c * J * J, axis=1)

    def mutual_measure(self, chain, g):
        """``mu<M, M^[g]>({x}) = sum_k phi_k(x) mu<f_k, g>({x})``."""
        J, _ = self.kernel(chain)
        g = chain.graph.coerce(g)
        return np.sum(chain.c * J * (g[None, :] - g[:, None]), axis=1)


@dataclass
class PathFunctional:
    """Piecewise-linear càdlàg function given by left and right limits at its knots.

    ``knots`` are ``0, t_1, ..., t_k, T``; ``right[j]`` is the value at knot
    ``j`` and ``left[j]`` the limit from the left.
    """

    knots: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.knots.size - 2)
        t0, t1 = self.knots[j], self.knots[j + 1]
        frac = np.where(t1 > t0, (t - t0) / np.where(t1 > t0, t1 - t0, 1.0), 0.0)
        out = self.right[j] + frac * (self.left[j + 1] - self.right[j])
        return np.where(t >= self.knots[-1], self.right[-1], out)

    @property
    def terminal(self):
        return float(self.right[-1])

    def __sub__(self, other):
        if not np.array_equal(self.knots, other.knots):
            raise ValueError("functionals live on different paths")
        return PathFunctional(self.knots, self.left - other.left, self.right - other.right)

    def __add__(self, other):
        if not np.array_equal(self.knots, other.knots):
            raise ValueError("functionals live on different paths")
        return PathFunctional(self.knots, self.left + other.left, self.right + other.right)

    def sup_abs(self):
        """Supremum of ``|F|`` on ``[0, T]``; attained at a knot limit."""
        return float(max(np.max(np.abs(self.left)), np.max(np.abs(self.right))))


def _functional(path, J, K):
    s = path.states
    d = path.holding_times()
    jumps = J[s[:-1], s[1:]]
    drift = K[s] * d
    # right value after knot j, then left value at knot j + 1, alternating
    inc = np.empty(2 * s.size)
    inc[0::2] = np.r_[0.0, jumps]
    inc[1::2] = -drift
    vals = np.cumsum(inc)
    right = vals[0::2]
    left_next = vals[1::2]
    left = np.r_[0.0, left_next]
    right = np.r_[right, left_next[-1]]
    knots = np.r_[path.times, path.horizon]
    return PathFunctional(knots, left, right)


def maf_functional(chain, path, M):
    """Pathwise values of the martingale described by ``M``."""
    J, K = M.kernel(chain)
    return _functional(path, J, K)


def fukushima_martingale(chain, path, f):
    """``M^[f]_t = f(X_t) - f(X_0) - int_0^t Lf(X_s) ds``."""
    return maf_functional(chain, path, MAFSpec.fukushima(chain.graph.coerce(f)))


def carre_du_champ(chain, f):
    """``Gamma f(x) = mu<f>({x}) / m(x)``, the rate of ``<M^[f]>``."""
    f = chain.graph.coerce(f)
    mu = np.sum(chain.c * (f[:, None] - f[None, :]) ** 2, axis=1)
    return mu / chain.m


def quadratic_variation(chain, path, f):
    """``(sum over jumps of (Delta M^[f])**2, int_0^T Gamma f(X_s) ds)``."""
    f = chain.graph.coerce(f)
    s = path.states
    jumps = f[s[1:]] - f[s[:-1]]
    return float(np.sum(jumps * jumps)), float(np.sum(carre_du_champ(chain, f)[s] * path.holding_times()))


def stochastic_integral(chain, path, h, M):
    """``(h . M)_t``: jumps ``h(X_{s-}) Delta M_s`` minus the compensator ``int h K(X_s) ds``."""
    h = np.asarray(h, dtype=float)
    J, K = M.kernel(chain)
    return _functional(path, h[:, None] * J, h * K)


@dataclass
class VectorIntegrand:
    """Per-atom ``h(x) in R^p`` against the coordinate martingales ``M^[g]``."""

    h: np.ndarray
    tuple: object = field(repr=False)

    def norm2(self):
        """``(h, h)_{M^[g]} = sum_x nu(x) h^T Z_g h``."""
        t = self.tuple
        return float(np.sum(t.nu * np.einsum("xi,xij,xj->x", self.h, t.Zg, self.h)))

    def atom_quadratic(self):
        return np.einsum("xi,xij,xj->x", self.h, self.tuple.Zg, self.h)


def _require_G(chain, tup):
    if not tup.in_G:
        a = tup.worst_atom
        raise IllConditionedError(chain.graph.space.atoms[a], float(tup.cond[a]), tup.kappa_max)


def representation_integrand(chain, M, tup, nu=None, method="qr"):
    """``h`` with ``M = h . M^[g]``: on ``X(r)`` solve ``Z_{g,r} h = v_r``, ``v_i = d mu<M, M^[g_i]> / d nu``.

    ``method="qr"`` solves the system as a weighted least-squares fit of the
    jumps of ``M`` by the jumps of ``g`` at each atom; ``"cholesky"`` solves
    the density system with the tuple's stored factors.
    """
    _require_G(chain, tup)
    if method == "cholesky":
        G = np.stack([M.mutual_measure(chain, g) for g in tup.g], axis=1)
        v = np.zeros_like(G)
        v[tup.charged] = G[tup.charged] / tup.nu[tup.charged, None]
        return VectorIntegrand(_solve_blocks(tup, v), tup)
    if method != "qr":
        raise ValueError(f"unknown method {method!r}")
    J, _ = M.kernel(chain)
    s = np.sqrt(chain.c)
    A = weighted_jets(chain.graph, tup.g)  # g_i(x) - g_i(y), scaled
    return VectorIntegrand(_lstsq_blocks(tup, -J * s, A), tup)


def vector_integral(chain, path, integrand):
    """``sum_i (h_i . M^[g_i])`` along ``path``."""
    out = None
    for i, g in enumerate(integrand.tuple.g):
        term = stochastic_integral(chain, path, integrand.h[:, i], MAFSpec.fukushima(g))
        out = term if out is None else out + term
    return out


@dataclass
class RepresentationReport:
    max_error: float
    max_rel_error: float
    worst_path: int
    first_offence: tuple | None
    tol: float
    n_paths: int

    @property
    def ok(self):
        return self.first_offence is None


def representation_check(chain, paths, M, tup, nu=None, tol=1e-8, raise_on_fail=False):
    """Pathwise ``sup_t |M_t - sum_i (h_i . M^[g_i])_t|`` on every path.

    A path fails when the error exceeds ``tol * (1 + sup |M|)``; the report
    names the first failing path, jump index and pre-jump atom.
    """
    _require_G(chain, tup)
    h = representation_integrand(chain, M, tup)
    worst, worst_rel, worst_path, offence = 0.0, 0.0, -1, None
    for path in paths:
        m = maf_functional(chain, path, M)
        diff = m - vector_integral(chain, path, h)
        err = diff.sup_abs()
        rel = err / (1.0 + m.sup_abs())
        if err > worst:
            worst, worst_path = err, path.path_id
        worst_rel = max(worst_rel, rel)
        if offence is None and rel > tol:
            bad = np.maximum(np.abs(diff.left), np.abs(diff.right)) > tol * (1.0 + m.sup_abs())
            j = int(np.argmax(bad))
            atom = path.states[max(min(j, path.states.size) - 1, 0)]
            offence = (path.path_id, j, chain.graph.space.atoms[atom])
    report = RepresentationReport(worst, worst_rel, worst_path, offence, tol, len(paths))
    if raise_on_fail and not report.ok:
        raise RepresentationError(f"representation fails on path {offence[0]} at knot {offence[1]}, atom {offence[2]}")
    return report


@dataclass
class IsometryReport:
    e_exact: float
    half_norm: float
    e_mc: float | None = None
    se: float | None = None

    @property
    def rel_error(self):
        scale = max(abs(self.e_exact), abs(self.half_norm))
        return 0.0 if scale == 0 else abs(self.e_exact - self.half_norm) / scale

    @property
    def mc_z(self):
        if self.e_mc is None:
            return None
        if self.se == 0:
            return 0.0 if self.e_mc == self.e_exact else np.inf
        return abs(self.e_mc - self.e_exact) / self.se


def energy_isometry(chain, M, tup, nu=None, paths=None):
    """``e(M)`` three ways: from its Revuz measure, as ``(h, h)/2``, and by Monte Carlo.

    ``paths`` must start from the stationary law; then
    ``E[M_T**2] = T mu<M>(X) / m(X)`` and ``e_mc = m(X) mean(M_T**2) / (2T)``.
    """
    e_exact = 0.5 * float(np.sum(M.revuz_density(chain)))
    h = representation_integrand(chain, M, tup)
    report = IsometryReport(e_exact, 0.5 * h.norm2())
    if paths:
        J, K = M.kernel(chain)
        finals = np.array([_functional(p, J, K).terminal for p in paths])
        T = paths[0].horizon
        scale = chain.m.sum() / (2.0 * T)
        sq = finals * finals
        report.e_mc = float(scale * np.mean(sq))
        report.se = float(scale * np.std(sq, ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else np.inf
    return report


def truncate_integrand(integrand, k):
    """Zero ``h`` outside ``A_k = {x : h^T Z_g h <= k}``."""
    if k < 0:
        raise ValueError("truncation level must be nonnegative")
    keep = integrand.atom_quadratic() <= k
    return VectorIntegrand(np.where(keep[:, None], integrand.h, 0.0), integrand.tuple)


def random_spec(chain, family, seed, n_terms=3, index=0):
    """Random finite sum of ``phi_k . M^[f_k]`` with Gaussian weights and functions."""
    gen = _rng.stream(seed, _rng.GENERATE, index)
    family = [chain.graph.coerce(f) for f in family]
    terms = []
    for _ in range(int(gen.integers(1, n_terms + 1))):
        coeffs = gen.standard_normal(len(family))
        f = chain.graph.combine(coeffs, family)
        phi = gen.standard_normal(chain.n_atoms)
        terms.append((phi, f))
    return MAFSpec(terms)
