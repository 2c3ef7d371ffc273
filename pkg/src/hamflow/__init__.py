"""Hamiltonian-action detection on weighted simplicial surfaces.

The pipeline: build a closed oriented triangle mesh, put a positive
vertex density on it, assemble the weighted Hodge machinery, contract
the area form with group-action generators, and measure the harmonic
part of each contraction.  A vanishing harmonic part means the generator
admits a momentum function, which is then reconstructed; an order-one
part means the action direction is cohomologically free.  Quotient
utilities check the integral identities that justify pushing densities
down free quotients.
"""

from . import _threads  # noqa: F401  (must precede the numeric imports)

from .mesh import (
    MeshError,
    SimplicialSurface,
    SimplicialAutomorphism,
    QuotientCover,
    IntegralCheck,
    gen_icosphere,
    gen_flat_torus,
    genus2_surface,
    subdivide,
    disjoint_union,
    load_off,
    save_off,
    save_vtk,
    automorphism_from_points,
    lattice_translations,
    build_quotient,
    quotient_integral_check,
    product_integral_check,
)
from .forms import (
    Cochain,
    MeasureDensity,
    CompatibleTriple,
    TangentField,
    build_triple,
    d,
    de_rham,
    inner,
    norm,
    codifferential,
    flat,
    j_apply,
    contract_omega,
    pullback,
    write_cochain_csv,
)
from .hodge import (
    SolverError,
    HodgeResult,
    HarmonicBasis,
    decompose_closed,
    harmonic_basis,
    harmonic_project,
    j_invariance_defect,
    laplacian0_kernel_dim,
    kernel_identity_check,
    HodgeDecomposition,
)
from .action import (
    GeneratorSet,
    FixedPointSet,
    builtin_field,
    trig_hamiltonian,
    fixed_points,
    write_field_csv,
    read_field_csv,
)
from .detect import (
    GeneratorVerdict,
    DetectionReport,
    obstruction,
    detect_hamiltonian,
    ginzburg_split,
    momentum_residual,
    HamiltonianDetector,
)

__version__ = "0.1.0"

__all__ = [
    "MeshError",
    "SimplicialSurface",
    "SimplicialAutomorphism",
    "QuotientCover",
    "IntegralCheck",
    "gen_icosphere",
    "gen_flat_torus",
    "genus2_surface",
    "subdivide",
    "disjoint_union",
    "load_off",
    "save_off",
    "save_vtk",
    "automorphism_from_points",
    "lattice_translations",
    "build_quotient",
    "quotient_integral_check",
    "product_integral_check",
    "Cochain",
    "MeasureDensity",
    "CompatibleTriple",
    "TangentField",
    "build_triple",
    "d",
    "de_rham",
    "inner",
    "norm",
    "codifferential",
    "flat",
    "j_apply",
    "contract_omega",
    "pullback",
    "write_cochain_csv",
    "SolverError",
    "HodgeResult",
    "HarmonicBasis",
    "decompose_closed",
    "harmonic_basis",
    "harmonic_project",
    "j_invariance_defect",
    "laplacian0_kernel_dim",
    "kernel_identity_check",
    "HodgeDecomposition",
    "GeneratorSet",
    "FixedPointSet",
    "builtin_field",
    "trig_hamiltonian",
    "fixed_points",
    "write_field_csv",
    "read_field_csv",
    "GeneratorVerdict",
    "DetectionReport",
    "obstruction",
    "detect_hamiltonian",
    "ginzburg_split",
    "momentum_residual",
    "HamiltonianDetector",
    "__version__",
]
