"""Named invariant suites shared by the CLI and the test-suite.

Every check returns a :class:`CheckResult` holding the worst observed value
of its (normalized) error, the tolerance it was held to, and where the worst
case happened. A :class:`SuiteReport` passes iff every check does.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import medm as _medm
from . import riemann as _riemann
from . import rng as _rng
from . import stoch as _stoch
from .forms import (
    TAU_ZERO,
    GraphForm,
    QuadPoly,
    SGForm,
    SGFunction,
    SuperpositionForm,
    default_family,
    energy,
    energy_measure,
    gram_measures,
    mutual_energy_measure,
    polarized_measure,
    random_graph,
)
from .forms.sg import n_vertices


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    location: str = ""
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed, self.worst, self.tol = bool(self.passed), float(self.worst), float(self.tol)

    @property
    def status(self):
        return "pass" if self.passed else "fail"

    def to_dict(self):
        d = asdict(self)
        d["status"] = self.status
        return d


@dataclass
class SuiteReport:
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def status(self):
        return "pass" if self.passed else "fail"

    def failing(self):
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self):
        return {"status": self.status, "checks": [c.to_dict() for c in self.checks], "info": self.info}


@dataclass
class Context:
    """Model, family and tolerances shared by the suites, with lazily built stages."""

    model: object
    family: list | None = None
    seed: int = 0
    tol_rank: float = _riemann.TOL_RANK
    kappa_max: float = _riemann.KAPPA_MAX
    tau_zero: float = TAU_ZERO
    n_functions: int = 20
    n_paths: int = 200
    horizon: float = 10.0
    n_specs: int = 5
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.family is None:
            self.family = default_family(self.model, self.seed)
        for name in ("tol_rank", "kappa_max", "tau_zero"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def nu(self):
        if "nu" not in self._cache:
            self._cache["nu"] = _medm.build_medm(self.model, self.family)
        return self._cache["nu"]

    @property
    def gram(self):
        if "gram" not in self._cache:
            self._cache["gram"] = _riemann.gram_field(self.model, self.family, self.nu, tau_zero=self.tau_zero)
        return self._cache["gram"]

    @property
    def index(self):
        if "index" not in self._cache:
            self._cache["index"] = _riemann.pointwise_index(self.gram, self.tol_rank, self.tau_zero)
        return self._cache["index"]

    @property
    def tuple(self):
        if "tuple" not in self._cache:
            self._cache["tuple"] = _riemann.sample_coordinates(
                self.model, self.family, self.nu, self.index, self.seed, self.kappa_max, tau_zero=self.tau_zero
            )
        return self._cache["tuple"]

    @property
    def chain(self):
        if "chain" not in self._cache:
            self._cache["chain"] = _stoch.ChainModel(self.model)
        return self._cache["chain"]

    def paths(self, init="stationary"):
        key = ("paths", init)
        if key not in self._cache:
            self._cache[key] = _stoch.simulate_paths(self.chain, self.seed, self.horizon, self.n_paths, init)
        return self._cache[key]

    def atom(self, i):
        return self.model.space.atoms[int(i)]


def random_function(model, seed, index=0):
    """A seeded test function that is generic for the backend."""
    gen = _rng.stream(seed, _rng.CHECK, index)
    if isinstance(model, GraphForm):
        return gen.standard_normal(model.n_atoms)
    if isinstance(model, SGForm):
        lv = min(model.level, 2)
        return SGFunction(lv, gen.standard_normal(n_vertices(lv)))
    if isinstance(model, SuperpositionForm):
        d = model.dim
        q = gen.standard_normal((d, d))
        return QuadPoly(d, gen.standard_normal(), gen.standard_normal(d), q)
    raise TypeError(f"no random functions for {type(model).__name__}")


def _worst(values, ctx, tol, name, detail=None):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return CheckResult(name, True, 0.0, tol, "", detail or {})
    i = int(np.argmax(values))
    return CheckResult(name, bool(values[i] <= tol), float(values[i]), tol, ctx.atom(i), detail or {})


# --- forms ------------------------------------------------------------------

def forms_checks(ctx, tol=1e-10):
    """Total mass, polarization, Cauchy-Schwarz on atom subsets, constant invariance."""
    m = ctx.model
    total, polar, schwarz, const = [], [], [], []
    gen = _rng.stream(ctx.seed, _rng.CHECK, 10_000)
    for k in range(ctx.n_functions):
        f = random_function(m, ctx.seed, 2 * k)
        g = random_function(m, ctx.seed, 2 * k + 1)
        mu_f, mu_g = energy_measure(m, f), energy_measure(m, g)
        e = energy(m, f)
        total.append(abs(mu_f.sum() - 2 * e) / max(2 * abs(e), 1e-300))
        mfg = mutual_energy_measure(m, f, g)
        pol = polarized_measure(m, f, g)
        polar.append(np.max(np.abs(mfg - pol)) / max(np.max(mu_f + mu_g), 1e-300))
        for _ in range(max(1, 50 // ctx.n_functions)):
            mask = gen.random(m.n_atoms) < 0.5
            lhs = abs(mfg[mask].sum())
            rhs = np.sqrt(mu_f[mask].sum() * mu_g[mask].sum())
            schwarz.append(max(lhs - rhs, 0.0) / max(rhs, 1e-300))
        c = float(gen.standard_normal())
        shifted = energy_measure(m, f + m.constant(c))
        const.append(np.max(np.abs(shifted - mu_f)) / max(np.max(mu_f), 1e-300))
    return [
        CheckResult("total_mass", max(total) <= tol, max(total), tol),
        CheckResult("polarization", max(polar) <= tol, max(polar), tol),
        CheckResult("cauchy_schwarz", max(schwarz) <= tol, max(schwarz), tol),
        CheckResult("constant_invariance", max(const) <= tol, max(const), tol),
    ]


def random_graph_forms_checks(n_graphs, seed=0, tol=1e-10, max_vertices=50, n_functions=5):
    """:func:`forms_checks` on ``n_graphs`` seeded random connected graphs."""
    out = {}
    for k in range(n_graphs):
        n = 3 + int(_rng.stream(seed, _rng.GENERATE, 10_000 + k).integers(max_vertices - 2))
        g = random_graph(n, seed=seed + k)
        ctx = Context(g, family=[], seed=seed + k, n_functions=n_functions)
        for c in forms_checks(ctx, tol):
            prev = out.get(c.name)
            if prev is None or c.worst > prev.worst:
                c.location = f"graph seed {seed + k}" + (f", atom {c.location}" if c.location else "")
                out[c.name] = c
    for c in out.values():
        c.passed = c.worst <= c.tol
    return list(out.values())


# --- medm / index -------------------------------------------------------------

def medm_checks(ctx):
    ok, report = _medm.is_medm(ctx.nu, ctx.model, ctx.family, ctx.tau_zero)
    out = [CheckResult("medm", ok, float(len(report["undominated"]) + len(report["excess_atoms"])), 0.0,
                       str((report["undominated"] or report["excess_atoms"] or [""])[0]))]
    nu = np.asarray(ctx.nu.nu_weights)
    err = [abs(nu.sum() - sum(w * energy_measure(ctx.model, f).sum()
                               for w, f in zip(ctx.nu.mix_weights, ctx.family)))]
    out.append(CheckResult("medm_mass", err[0] <= 1e-10 * (1 + nu.sum()), err[0], 1e-10))
    return out


def index_checks(ctx):
    Z = ctx.gram.Z
    ev = np.linalg.eigvalsh(Z)
    neg = np.maximum(-ev[:, 0], 0.0) / (ev[:, -1] + 1.0)
    out = [_worst(neg, ctx, 1e-10, "gram_psd")]
    ix = ctx.index
    null_mass = float(np.sum(ix.nu[ix.p_x == 0]))
    out.append(CheckResult("null_stratum", null_mass <= ctx.tau_zero, null_mass, ctx.tau_zero))
    over = int(np.max(ix.p_x)) - len(ctx.family)
    out.append(CheckResult("index_bound", over <= 0, float(max(over, 0)), 0.0))
    # adding family members never lowers the pointwise rank
    prev = np.zeros(ctx.model.n_atoms, dtype=int)
    drops = 0
    for k in range(1, len(ctx.family) + 1):
        sub = _riemann.GramField(Z[:, :k, :k], ix.nu, ctx.gram.labels[:k])
        p = _riemann.pointwise_index(sub, ctx.tol_rank, ctx.tau_zero).p_x
        drops += int(np.sum(p < prev))
        prev = p
    out.append(CheckResult("rank_monotone", drops == 0, float(drops), 0.0))
    return out


# --- gradient machinery -------------------------------------------------------

def schur_checks(ctx, tol=1e-8):
    m, tup = ctx.model, ctx.tuple
    sch, rem, ident, recon = [], [], [], []
    for k in range(ctx.n_functions):
        f = random_function(m, ctx.seed, 100 + k)
        h = random_function(m, ctx.seed, 10_000 + k)
        dff = np.zeros(m.n_atoms)
        mu = energy_measure(m, f)
        dff[tup.charged] = mu[tup.charged] / tup.nu[tup.charged]
        s = _riemann.schur_complement(m, f, tup)
        r = _riemann.remainder_density(m, f, tup)
        sch.append(np.abs(s) / (1 + dff))
        rem.append(np.abs(r) / (1 + dff))
        ident.append(np.abs(s - r) / (1 + dff))
        recon.append(_riemann.energy_reconstruction(m, f, h, tup)[2])
    sch, rem, ident = (np.max(np.stack(a), axis=0) for a in (sch, rem, ident))
    return [
        _worst(sch, ctx, tol, "schur_residual"),
        _worst(rem, ctx, tol, "remainder_density"),
        _worst(ident, ctx, 1e-10, "schur_equals_remainder"),
        CheckResult("energy_reconstruction", max(recon) <= tol, max(recon), tol),
    ]


def derivation_checks(ctx, tol=1e-8):
    m = ctx.model
    if not isinstance(m, SuperpositionForm):
        return []
    cases = derivation_cases(m, ctx.seed)
    errs = [_riemann.derivation_check(m, psi, fs, ctx.tuple) for psi, fs in cases]
    return [CheckResult("derivation", max(errs) <= tol, max(errs), tol, "", {"cases": len(cases)})]


def derivation_cases(form, seed, n_cases=10):
    """Products ``u v`` and chains ``psi(u)`` of linear catalogue combinations."""
    gen = _rng.stream(seed, _rng.CHECK, 20_000)
    d = form.dim
    names = [n for n, f in form.catalogue.items() if f.degree == 1]
    lin = [form.catalogue[n] for n in names]
    cases = [(QuadPoly(2, 0.0, [0, 0], [[0, 1], [0, 0]]), [lin[0], lin[-1]])]  # x1 * y
    while len(cases) < n_cases:
        u = sum((float(a) * f for a, f in zip(gen.standard_normal(d), lin)), QuadPoly(d, gen.standard_normal()))
        if len(cases) % 2:
            v = sum((float(a) * f for a, f in zip(gen.standard_normal(d), lin)), QuadPoly(d))
            a, b = gen.standard_normal(2)
            cases.append((QuadPoly(2, 0.0, [a, b], [[0, 0.5], [0.5, 0]]), [u, v]))
        else:
            c0, c1, c2 = gen.standard_normal(3)
            cases.append((QuadPoly(1, c0, [c1], [[c2]]), [u]))
    return cases


# --- stochastic ---------------------------------------------------------------

def repr_checks(ctx, tol=1e-8):
    if not isinstance(ctx.model, GraphForm):
        return []
    chain, tup, paths = ctx.chain, ctx.tuple, ctx.paths()
    f = random_function(ctx.model, ctx.seed, 300)
    specs = [_stoch.MAFSpec.fukushima(f)] + [
        _stoch.random_spec(chain, ctx.family, ctx.seed, 3, k) for k in range(ctx.n_specs)
    ]
    worst, where = 0.0, ""
    for k, M in enumerate(specs):
        rep = _stoch.representation_check(chain, paths, M, tup, tol=tol)
        if rep.max_rel_error >= worst:
            worst, where = rep.max_rel_error, f"spec {k}, path {rep.worst_path}"
    h = _stoch.representation_integrand(chain, specs[0], tup).h
    grad = _riemann.gradient(ctx.model, f, tup).values
    gerr = np.max(np.abs(h - grad), axis=1) / (1 + np.max(np.abs(grad), axis=1))
    return [
        CheckResult("representation", worst <= tol, worst, tol, where, {"paths": len(paths), "specs": len(specs)}),
        _worst(gerr, ctx, 1e-10, "integrand_is_gradient"),
    ]


def isometry_checks(ctx, tol=1e-8, z_max=3.0):
    if not isinstance(ctx.model, GraphForm):
        return []
    chain, tup = ctx.chain, ctx.tuple
    f = random_function(ctx.model, ctx.seed, 300)
    specs = [_stoch.MAFSpec.fukushima(f)] + [
        _stoch.random_spec(chain, ctx.family, ctx.seed, 3, k) for k in range(ctx.n_specs)
    ]
    rel = [_stoch.energy_isometry(chain, M, tup).rel_error for M in specs]
    mc = _stoch.energy_isometry(chain, specs[0], tup, paths=ctx.paths())
    return [
        CheckResult("isometry", max(rel) <= tol, max(rel), tol, "", {"specs": len(specs)}),
        CheckResult("energy_monte_carlo", mc.mc_z <= z_max, float(mc.mc_z), z_max, "",
                    {"e_exact": mc.e_exact, "e_mc": mc.e_mc, "se": mc.se}),
    ]


# --- SG -----------------------------------------------------------------------

def kusuoka_checks(ctx, levels=None):
    if not isinstance(ctx.model, SGForm):
        return []
    levels = range(1, max(ctx.model.level, 1) + 1) if levels is None else levels
    stats = _riemann.kusuoka_ratio_stats(levels)
    means = [s["mean_ratio"] for s in stats]
    rises = [b - a for a, b in zip(means, means[1:])]
    worst = max(rises, default=-1.0)
    return [CheckResult("kusuoka_decreasing", worst < 0, worst, 0.0, "", {"mean_ratio": means})]


def martingale_checks(ctx):
    if not isinstance(ctx.model, SGForm):
        return []
    m = ctx.model
    chain = _medm.PartitionChain.sg_cells(m.level)
    nu = ctx.nu
    G = gram_measures(m, ctx.family[:3])
    worst_rise, worst_final, worst_tower = -np.inf, 0.0, 0.0
    for i in range(G.shape[1]):
        for j in range(G.shape[2]):
            finest = _medm.density(G[:, i, j], nu, tau_zero=ctx.tau_zero)
            d = _medm.partition_distances(G[:, i, j], nu, chain, exact=True, tau_zero=ctx.tau_zero)
            for lv in range(len(chain)):
                z = _medm.partition_densities(G[:, i, j], nu, chain, lv, ctx.tau_zero)
                blocks = chain.levels[lv]
                tower = np.abs(np.bincount(blocks, weights=finest * nu) - np.bincount(blocks, weights=z * nu))
                worst_tower = max(worst_tower, float(tower.max()))
            worst_rise = max(worst_rise, max((b - a for a, b in zip(d, d[1:])), default=-np.inf))
            worst_final = max(worst_final, d[-1])
    return [
        CheckResult("partition_monotone", worst_rise <= 0, float(worst_rise), 0.0),
        CheckResult("partition_exact_at_finest", worst_final == 0.0, worst_final, 0.0),
        CheckResult("partition_tower", worst_tower <= 1e-12, worst_tower, 1e-12),
    ]


SUITES = {
    "forms": forms_checks,
    "polarization": forms_checks,
    "medm": medm_checks,
    "index": index_checks,
    "schur": schur_checks,
    "derivation": derivation_checks,
    "repr": repr_checks,
    "isometry": isometry_checks,
    "kusuoka": kusuoka_checks,
    "martingale": martingale_checks,
}

PIPELINE_SUITES = ("forms", "medm", "index", "schur", "derivation", "repr", "isometry", "kusuoka", "martingale")


def run_suites(ctx, names):
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    report = SuiteReport()
    for n in names:
        report.checks.extend(SUITES[n](ctx))
    return report
