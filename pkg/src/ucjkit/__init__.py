"""Compressed double-factorized unitary cluster Jastrow toolkit.

Pipeline pieces: integral and amplitude I/O (:mod:`ucjkit.chemio`),
determinant CI solvers (:mod:`ucjkit.detci`), exact double factorization of
t2 amplitudes (:mod:`ucjkit.dfcore`), gradient-based compression of the
factorization (:mod:`ucjkit.compress`), statevector simulation of (local)
UCJ circuits (:mod:`ucjkit.ucjsim`), sampled subspace diagonalization
(:mod:`ucjkit.qsci`), derivative-free parameter tuning against sampled
energies (:mod:`ucjkit.sampleopt`), and a CLI (:mod:`ucjkit.cli`).
"""

from ucjkit.chemio import (
    Amplitudes,
    Hamiltonian,
    SampleSet,
    parse_fcidump,
    read_amplitudes,
    read_bitstrings,
    read_fcidump,
    write_amplitudes,
    write_bitstrings,
    write_fcidump,
)
# The compression entry point itself stays at ucjkit.compress.compress so the
# bare name keeps referring to the submodule.
from ucjkit.compress import (
    CompressionConfig,
    ConnectivityMask,
    ParameterVector,
    apply_mask,
    loss,
    loss_gradient,
    mask_union,
    multistage_compress,
    pack_parameters,
    reconstruction_loss,
    unpack_parameters,
)
from ucjkit.detci import (
    CIBasis,
    CISDCoefficients,
    CIVector,
    ConvergenceError,
    apply_hamiltonian,
    cisd_ground_state,
    cisd_to_t_amplitudes,
    davidson_lowest,
    determinant_energy,
    enumerate_basis,
    extract_cisd_coefficients,
    fci_ground_state,
    hamiltonian_element,
    hamiltonian_matrix,
    hartree_fock_determinant,
)
from ucjkit.dfcore import (
    DFTerm,
    DoubleFactorization,
    double_factorize_t2,
    read_df_file,
    reconstruct_t2,
    truncate,
    truncation_error,
    write_df_file,
)
from ucjkit.numopt import (
    LbfgsResult,
    ObjectiveHandle,
    PatternSearchConfig,
    PatternSearchResult,
    format_trace,
    lbfgs_minimize,
    pattern_search_minimize,
)
from ucjkit.qsci import (
    QsciConfig,
    QsciResult,
    batched_qsci,
    build_subspace,
    filter_valid,
    format_report,
    qsci_energy,
)
from ucjkit.sampleopt import (
    AnsatzParameterization,
    SampleObjective,
    SampleOptConfig,
    SampleOptResult,
    optimize_sample_energy,
    sample_energy_objective,
)
from ucjkit.ucjsim import (
    StateVector,
    UCJOperator,
    apply_diagonal_coulomb,
    apply_orbital_rotation,
    entropy,
    prepare_hartree_fock,
    prepare_ucj_state,
    read_ucj_file,
    sample,
    ucj_from_df,
    vqe_energy,
    write_ucj_file,
)

__version__ = "0.1.0"

__all__ = [
    "Amplitudes",
    "AnsatzParameterization",
    "CIBasis",
    "CISDCoefficients",
    "CIVector",
    "CompressionConfig",
    "ConnectivityMask",
    "ConvergenceError",
    "DFTerm",
    "DoubleFactorization",
    "Hamiltonian",
    "LbfgsResult",
    "ObjectiveHandle",
    "ParameterVector",
    "PatternSearchConfig",
    "PatternSearchResult",
    "QsciConfig",
    "QsciResult",
    "SampleObjective",
    "SampleOptConfig",
    "SampleOptResult",
    "SampleSet",
    "StateVector",
    "UCJOperator",
    "apply_diagonal_coulomb",
    "apply_hamiltonian",
    "apply_mask",
    "apply_orbital_rotation",
    "batched_qsci",
    "build_subspace",
    "cisd_ground_state",
    "cisd_to_t_amplitudes",
    "davidson_lowest",
    "determinant_energy",
    "double_factorize_t2",
    "entropy",
    "enumerate_basis",
    "extract_cisd_coefficients",
    "fci_ground_state",
    "filter_valid",
    "format_report",
    "format_trace",
    "hamiltonian_element",
    "hamiltonian_matrix",
    "hartree_fock_determinant",
    "lbfgs_minimize",
    "loss",
    "loss_gradient",
    "mask_union",
    "multistage_compress",
    "optimize_sample_energy",
    "pack_parameters",
    "parse_fcidump",
    "pattern_search_minimize",
    "prepare_hartree_fock",
    "prepare_ucj_state",
    "qsci_energy",
    "read_amplitudes",
    "read_bitstrings",
    "read_df_file",
    "read_fcidump",
    "read_ucj_file",
    "reconstruct_t2",
    "reconstruction_loss",
    "sample",
    "sample_energy_objective",
    "truncate",
    "truncation_error",
    "ucj_from_df",
    "unpack_parameters",
    "vqe_energy",
    "write_amplitudes",
    "write_bitstrings",
    "write_df_file",
    "write_fcidump",
    "write_ucj_file",
]
