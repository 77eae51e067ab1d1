"""Exception hierarchy shared by all modules."""


class MRSError(Exception):
    """Base class for every error raised by mrstruct."""


class BackendMismatchError(MRSError, TypeError):
    """A function object does not belong to the model it was handed to."""


class LevelError(MRSError, ValueError):
    """Refinement level out of range (SG cells, partition chains)."""


class CatalogueError(MRSError, KeyError):
    """Unknown superposition catalogue id."""


class CompositeError(MRSError, ValueError):
    """A polynomial composite leaves the degree-2 function space."""


class DominationError(MRSError, ValueError):
    """A measure charges an atom on which the reference measure vanishes."""

    def __init__(self, atom, mu_value, nu_value):
        self.atom = atom
        super().__init__(
            f"measure not dominated at atom {atom!r}: mu={mu_value:.6g}, nu={nu_value:.6g}"
        )


class EmptyFamilyError(MRSError, ValueError):
    """A construction needs at least one function."""


class IllConditionedError(MRSError, ValueError):
    """A per-atom Gram block is singular or above the condition ceiling."""

    def __init__(self, atom, cond, kappa_max):
        self.atom = atom
        self.cond = cond
        super().__init__(
            f"atom {atom!r}: condition number {cond:.3g} exceeds ceiling {kappa_max:.3g}"
        )


class SamplingError(MRSError, RuntimeError):
    """No coordinate tuple landed in the target set within the redraw budget."""

    def __init__(self, redraws, worst_atom, worst_cond):
        self.redraws = redraws
        self.worst_atom = worst_atom
        self.worst_cond = worst_cond
        super().__init__(
            f"no admissible coordinate tuple after {redraws} draws "
            f"(worst atom {worst_atom!r}, condition number {worst_cond:.3g})"
        )


class RepresentationError(MRSError, AssertionError):
    """Pathwise representation check failed."""
