"""Spectral Galerkin approximations of parameterized matrix equations ``A(s) x(s) = b(s)``."""
from ._accel import NUMBA_ENABLED
from .basis import (
    MultiIndexSet,
    TensorQuadrature,
    anisotropic_tensor_set,
    eval_basis_matrix,
    eval_basis_vector,
    eval_orthonormal_legendre,
    explicit_set,
    gauss_legendre_rule,
    tensor_rule,
    total_degree_set,
)
from .config import ExperimentConfig, load_config, parse_config
from .errors import (
    Breakdown,
    CapExceeded,
    ConfigError,
    MaxIterExceeded,
    MissingCapability,
    NonFiniteEncountered,
    NotSymmetric,
    PMGalerkinError,
    PointCapExceeded,
    QuadratureTooCoarse,
    RankDeficient,
    SingularPreconditioner,
    SystemEvaluationError,
)
from .galerkin import (
    BasisQuadMatrix,
    GalerkinOperator,
    GalerkinSolution,
    ParameterizedSystem,
    assemble_dense_galerkin,
    assemble_rhs,
    build_basis_quad,
    eigenvalue_bounds,
    evaluate_surrogate,
    galerkin_matvec,
    moments,
)
from .experiment import run_benchmark, run_experiment, run_solve, verify
from .io import read_solution, write_solution
from .krylov import SolverConfig, bicgstab, cg, minres, solve
from .preconditioners import (
    BlockPreconditioner,
    PointSelectionReport,
    PreconditionerSpec,
    apply_block_preconditioner,
    build_preconditioner,
    find_largest_eig_point,
    find_smallest_eig_point,
)
from .problems import (
    AdvectionDiffusionSystem,
    AffineSystem,
    DiffusionSystem,
    KLField,
    advection_diffusion_system,
    affine_system,
    diffusion_system,
    identity_system,
    kl_decompose,
    zero_field,
)

__version__ = "0.1.0"
