"""Atom spaces, form backends, energies and energy measures."""
from .base import (
    KINDS,
    TAU_ZERO,
    AtomSpace,
    FormModel,
    energy,
    energy_measure,
    gram_measures,
    mutual_energy_measure,
    polarized_measure,
)
from .graph import (
    GraphForm,
    complete_graph,
    e1_orthonormal_family,
    indicator_family,
    path_graph,
    random_graph,
)
from .sg import (
    EXTENSION,
    SGForm,
    SGFunction,
    derive_sg_extension_matrices,
    q_form,
    sg_cell_energy_measure,
    sg_pwh_energy_measure,
)
from .superposition import QuadPoly, SuperpositionForm, catalogue, compose, superposition_density


def default_family(model, seed=0):
    """Family used when none is given: a generic orthonormal basis on graphs,
    harmonic basis plus level-1 tents on SG, the full catalogue on the
    superposition model."""
    if isinstance(model, GraphForm):
        return e1_orthonormal_family(model, seed)
    if isinstance(model, SGForm):
        return model.default_family()
    if isinstance(model, SuperpositionForm):
        return model.default_family()
    raise TypeError(f"no default family for {type(model).__name__}")


__all__ = [
    "KINDS", "TAU_ZERO", "AtomSpace", "FormModel", "energy", "energy_measure", "gram_measures",
    "mutual_energy_measure", "polarized_measure", "GraphForm", "complete_graph",
    "e1_orthonormal_family", "indicator_family", "path_graph", "random_graph", "EXTENSION",
    "SGForm", "SGFunction", "derive_sg_extension_matrices", "q_form", "sg_cell_energy_measure",
    "sg_pwh_energy_measure", "QuadPoly", "SuperpositionForm", "catalogue", "compose",
    "superposition_density", "default_family",
]
