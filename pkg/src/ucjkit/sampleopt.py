"""Derivative-free optimization of circuit parameters against sampled energies.

The objective prepares the parameterized state exactly, draws a fixed-seed
sample (common random numbers across evaluations), builds a single
symmetrized subspace from the draws and returns its ground energy. The
optimizer is the decomposed pattern search from :mod:`ucjkit.numopt`.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import NamedTuple

import numpy as np

from ucjkit import detci, numopt, qsci
from ucjkit.chemio import Hamiltonian
from ucjkit.compress import ConnectivityMask, _principal_log_unitary
from ucjkit.ucjsim import (
    StateVector,
    UCJOperator,
    _unitary_exp,
    prepare_ucj_state,
    sample,
)

__all__ = [
    "AnsatzParameterization",
    "SampleObjective",
    "SampleOptConfig",
    "SampleOptResult",
    "optimize_sample_energy",
    "sample_energy_objective",
]

EMPTY_SUBSPACE_ENERGY = float("inf")


def _antihermitian_from_coords(coords: np.ndarray, norb: int) -> np.ndarray:
    n_asym = norb * (norb - 1) // 2
    triu_r, triu_c = np.triu_indices(norb, k=1)
    amat = np.zeros((norb, norb))
    amat[triu_r, triu_c] = coords[:n_asym]
    amat = amat - amat.T
    smat = np.zeros((norb, norb))
    smat[np.arange(norb), np.arange(norb)] = coords[n_asym : n_asym + norb]
    smat[triu_r, triu_c] = coords[n_asym + norb :]
    smat = smat + smat.T - np.diag(np.diag(smat))
    return amat + 1j * smat


def _coords_from_antihermitian(gen: np.ndarray) -> np.ndarray:
    norb = gen.shape[0]
    triu_r, triu_c = np.triu_indices(norb, k=1)
    return np.concatenate(
        [gen.real[triu_r, triu_c], np.diag(gen.imag), gen.imag[triu_r, triu_c]]
    )


class AnsatzParameterization:
    """Flat real coordinates over a UCJ circuit's free parameters.

    Per repetition the coordinates cover the full antihermitian rotation
    generator and the mask-allowed entries of both coupling blocks; masked
    entries have no coordinate, so every unpacked operator satisfies the mask
    exactly. The final rotation, when present, contributes one more generator
    block. ``pack`` and ``unpack`` are mutually inverse (generators are taken
    in the principal branch).
    """

    def __init__(self, norb: int, n_reps: int, mask: ConnectivityMask | None, has_final: bool):
        self.norb = norb
        self.n_reps = n_reps
        self.mask = mask
        self.has_final = has_final
        if mask is None:
            every = tuple((p, q) for p in range(norb) for q in range(p, norb))
            self.aa_pairs = every
            self.ab_pairs = every
        else:
            if mask.norb != norb:
                raise ValueError(f"mask is for norb={mask.norb}, expected {norb}")
            self.aa_pairs = tuple(sorted(mask.aa_pairs))
            self.ab_pairs = tuple(sorted(mask.ab_pairs))
        self._gen_size = norb * norb
        self._rep_size = self._gen_size + len(self.aa_pairs) + len(self.ab_pairs)
        self.dim = n_reps * self._rep_size + (self._gen_size if has_final else 0)

    @classmethod
    def for_operator(
        cls, operator: UCJOperator, mask: ConnectivityMask | None
    ) -> "AnsatzParameterization":
        return cls(
            norb=operator.norb,
            n_reps=operator.n_reps,
            mask=mask,
            has_final=operator.final_rotation is not None,
        )

    def pack(self, operator: UCJOperator) -> np.ndarray:
        if operator.n_reps != self.n_reps or operator.norb != self.norb:
            raise ValueError("operator does not match this parameterization")
        if (operator.final_rotation is not None) != self.has_final:
            raise ValueError("operator final-rotation presence does not match")
        blocks = []
        for mu in range(self.n_reps):
            gen = _principal_log_unitary(operator.rotations[mu])
            blocks.append(_coords_from_antihermitian(gen))
            blocks.append(np.array([operator.couplings_aa[mu][p, q] for p, q in self.aa_pairs]))
            blocks.append(np.array([operator.couplings_ab[mu][p, q] for p, q in self.ab_pairs]))
        if self.has_final:
            blocks.append(_coords_from_antihermitian(_principal_log_unitary(operator.final_rotation)))
        return np.concatenate(blocks) if blocks else np.zeros(0)

    def unpack(self, coords: np.ndarray) -> UCJOperator:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.dim,):
            raise ValueError(f"coordinate vector has shape {coords.shape}, expected ({self.dim},)")
        norb = self.norb
        rotations = np.zeros((self.n_reps, norb, norb), dtype=complex)
        couplings_aa = np.zeros((self.n_reps, norb, norb))
        couplings_ab = np.zeros((self.n_reps, norb, norb))
        offset = 0
        for mu in range(self.n_reps):
            gen = _antihermitian_from_coords(coords[offset : offset + self._gen_size], norb)
            rotations[mu] = _unitary_exp(gen)
            offset += self._gen_size
            for (p, q), value in zip(self.aa_pairs, coords[offset : offset + len(self.aa_pairs)]):
                couplings_aa[mu, p, q] = couplings_aa[mu, q, p] = value
            offset += len(self.aa_pairs)
            for (p, q), value in zip(self.ab_pairs, coords[offset : offset + len(self.ab_pairs)]):
                couplings_ab[mu, p, q] = couplings_ab[mu, q, p] = value
            offset += len(self.ab_pairs)
        final = None
        if self.has_final:
            gen = _antihermitian_from_coords(coords[offset : offset + self._gen_size], norb)
            final = _unitary_exp(gen)
        return UCJOperator(
            rotations=rotations,
            couplings_aa=couplings_aa,
            couplings_ab=couplings_ab,
            final_rotation=final,
        )


@dataclasses.dataclass(frozen=True)
class SampleOptConfig:
    """Settings for sample-based energy optimization.

    Attributes:
        shots: Draws per objective evaluation, taken with the same fixed seed
            every time (common random numbers).
        optimizer: Pattern-search settings, including the evaluation budget
            and the subset-draw seed.
        mask: Connectivity restriction on the optimized couplings; ``None``
            leaves every entry free.
        seed: Sampling seed shared by all evaluations of one run.
        davidson_tol: Residual tolerance of the subspace eigensolve inside
            the objective.
    """

    shots: int = 10_000
    optimizer: numopt.PatternSearchConfig = numopt.PatternSearchConfig()
    mask: ConnectivityMask | None = None
    seed: int = 0
    davidson_tol: float = detci.DAVIDSON_TOL

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise ValueError(f"shots must be at least 1, got {self.shots}")


def sample_energy_objective(
    params: UCJOperator | np.ndarray,
    hamiltonian: Hamiltonian,
    reference: StateVector,
    config: SampleOptConfig = SampleOptConfig(),
    parameterization: AnsatzParameterization | None = None,
) -> float:
    """Single-batch sampled-QSCI energy of a parameterized circuit.

    Prepares the state exactly, draws ``config.shots`` samples with the
    run's fixed seed, filters them to the reference sector, and returns the
    ground energy of the symmetrized subspace they span. Deterministic for
    fixed parameters.

    Args:
        params: Either a circuit operator or a flat coordinate vector; the
            latter requires ``parameterization`` to unpack it.
        hamiltonian: Target Hamiltonian.
        reference: Reference state the circuit acts on.
        config: Evaluation settings.
        parameterization: Coordinate layout for vector-valued ``params``.

    Returns:
        The subspace ground energy, or ``inf`` (with a warning) when no draw
        survives the sector filter.
    """
    if isinstance(params, UCJOperator):
        operator = params
    else:
        if parameterization is None:
            raise ValueError("coordinate-vector params require a parameterization")
        operator = parameterization.unpack(np.asarray(params, dtype=float))
    state = prepare_ucj_state(operator, reference)
    draws = sample(state, config.shots, config.seed)
    valid = qsci.filter_valid(draws, reference.nelec)
    if len(valid) == 0:
        warnings.warn(
            "no sampled determinant matched the target sector; returning inf",
            RuntimeWarning,
            stacklevel=2,
        )
        return EMPTY_SUBSPACE_ENERGY
    basis = qsci.build_subspace(valid, reference.norb, reference.nelec)
    energy, _ = qsci.qsci_energy(basis, hamiltonian, tol=config.davidson_tol)
    return float(energy)


class SampleObjective:
    """Sampled-QSCI energy of unpacked circuit parameters.

    Evaluations with no valid draws return ``inf``; their count is kept in
    ``empty_evaluations``.
    """

    def __init__(
        self,
        parameterization: AnsatzParameterization,
        hamiltonian: Hamiltonian,
        reference: StateVector,
        config: SampleOptConfig,
    ):
        self.parameterization = parameterization
        self.hamiltonian = hamiltonian
        self.reference = reference
        self.config = config
        self.empty_evaluations = 0

    def __call__(self, coords: np.ndarray) -> float:
        operator = self.parameterization.unpack(coords)
        state = prepare_ucj_state(operator, self.reference)
        draws = sample(state, self.config.shots, self.config.seed)
        valid = qsci.filter_valid(draws, self.reference.nelec)
        if len(valid) == 0:
            self.empty_evaluations += 1
            return EMPTY_SUBSPACE_ENERGY
        basis = qsci.build_subspace(valid, self.reference.norb, self.reference.nelec)
        energy, _ = qsci.qsci_energy(basis, self.hamiltonian, tol=self.config.davidson_tol)
        return float(energy)


class SampleOptResult(NamedTuple):
    """Optimized operator and the full ``(x, f)`` evaluation trace."""

    operator: UCJOperator
    trace: tuple[tuple[np.ndarray, float], ...]

    @property
    def energy(self) -> float:
        """Best objective value seen; ``nan`` for an empty trace."""
        if not self.trace:
            return math.nan
        return min(value for _, value in self.trace)


def optimize_sample_energy(
    ucj_init: UCJOperator,
    hamiltonian: Hamiltonian,
    reference: StateVector,
    config: SampleOptConfig = SampleOptConfig(),
) -> SampleOptResult:
    """Pattern-search the circuit parameters against the sampled energy.

    The incumbent never worsens: every accepted step strictly improves the
    objective, and a zero budget returns the initial operator untouched.
    The result unpacks as ``(operator, trace)``.
    """
    parameterization = AnsatzParameterization.for_operator(ucj_init, config.mask)
    if config.optimizer.total_budget <= 0:
        return SampleOptResult(operator=ucj_init, trace=())
    objective = SampleObjective(
        parameterization=parameterization,
        hamiltonian=hamiltonian,
        reference=reference,
        config=config,
    )
    x_best, _, trace = numopt.pattern_search_minimize(
        objective,
        parameterization.pack(ucj_init),
        config.optimizer,
    )
    return SampleOptResult(operator=parameterization.unpack(x_best), trace=trace)
