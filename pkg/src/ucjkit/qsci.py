"""Quantum-selected CI: subspace construction from samples and batched solves.

Sampled determinants are symmetrized into a spin-exchangeable subspace: the
union S of all alpha and beta occupation strings seen defines the basis
``{(a, b) : a, b in S}``, which is closed under swapping the spin parts.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ucjkit import detci
from ucjkit.chemio import Hamiltonian, SampleSet
from ucjkit.ucjsim import StateVector, sample

__all__ = [
    "QsciConfig",
    "QsciResult",
    "batched_qsci",
    "build_subspace",
    "filter_valid",
    "format_report",
    "qsci_energy",
]

THREAD_ENV_VAR = "UCJKIT_NUM_THREADS"


def _popcounts(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)


def filter_valid(samples: SampleSet, nelec: tuple[int, int]) -> SampleSet:
    """Keep draws whose per-spin electron counts match the target sector."""
    n_alpha, n_beta = nelec
    keep = (_popcounts(samples.alpha) == n_alpha) & (_popcounts(samples.beta) == n_beta)
    return SampleSet(
        norb=samples.norb,
        alpha=samples.alpha[keep],
        beta=samples.beta[keep],
        seed=samples.seed,
        source_dim=samples.source_dim,
    )


def build_subspace(
    samples: SampleSet, norb: int, nelec: tuple[int, int]
) -> detci.CIBasis:
    """Spin-symmetrized subspace basis from valid-filtered samples.

    The string set S is the union of the distinct alpha and beta halves of
    the draws; the basis holds every pairing of two members of S, so its
    dimension is ``len(S) ** 2`` and it is closed under spin swap.

    Raises:
        ValueError: For spin-unbalanced sectors (the symmetrized construction
            is only defined for ``n_alpha == n_beta``), an empty sample set,
            or an orbital-count mismatch with the samples.
    """
    n_alpha, n_beta = nelec
    if n_alpha != n_beta:
        raise ValueError("spin-symmetrized subspaces require n_alpha == n_beta")
    if samples.norb != norb:
        raise ValueError(f"samples are over {samples.norb} orbitals, expected {norb}")
    if len(samples) == 0:
        raise ValueError("cannot build a subspace from an empty sample set")
    strings = sorted(set(samples.alpha.tolist()) | set(samples.beta.tolist()))
    dets = tuple((a, b) for a in strings for b in strings)
    return detci.CIBasis(norb=norb, determinants=dets)


def qsci_energy(
    basis: detci.CIBasis,
    hamiltonian: Hamiltonian,
    tol: float = detci.DAVIDSON_TOL,
) -> tuple[float, detci.CIVector]:
    """Ground energy and vector of the Hamiltonian projected onto a basis."""
    mat = detci.hamiltonian_matrix(basis, hamiltonian)
    energy, vec, info = detci.davidson_lowest(lambda v: mat @ v, mat.diagonal(), tol=tol)
    if not info["converged"]:
        raise detci.ConvergenceError(
            f"subspace diagonalization stalled at residual {info['residual']:.3e}"
        )
    return energy, detci.CIVector(basis=basis, coeffs=vec)


@dataclasses.dataclass(frozen=True)
class QsciConfig:
    """Settings for batched subspace selection.

    Attributes:
        total_samples: Number of draws taken from the state (when sampling
            internally).
        batches: Number of independent subsets of the draw pool.
        batch_size: Draws per batch, subsampled without replacement inside a
            batch; the same draw may appear in several batches.
        seed: Seed for both the state sampling and the batch subsampling.
        davidson_tol: Residual tolerance of the per-batch eigensolve.
        include_reference: Force the reference determinant's strings into
            every subspace (off by default; nothing is injected).
    """

    total_samples: int = 100_000
    batches: int = 10
    batch_size: int = 4000
    seed: int = 0
    davidson_tol: float = detci.DAVIDSON_TOL
    include_reference: bool = False

    def __post_init__(self) -> None:
        if self.batches < 1:
            raise ValueError(f"batches must be at least 1, got {self.batches}")
        if not 1 <= self.batch_size <= self.total_samples:
            raise ValueError(
                f"batch_size must lie in [1, total_samples={self.total_samples}], "
                f"got {self.batch_size}"
            )


@dataclasses.dataclass(frozen=True)
class QsciResult:
    """Batched subspace energies and their statistics.

    ``excluded`` flags batches whose valid-filtered sample set was empty;
    statistics cover the included batches only.
    """

    batch_energies: tuple[float, ...]
    subspace_dims: tuple[int, ...]
    string_counts: tuple[int, ...]
    valid_counts: tuple[int, ...]
    excluded: tuple[int, ...]
    mean_energy: float
    min_energy: float
    max_energy: float
    best_vector: detci.CIVector


def batched_qsci(
    source: StateVector | SampleSet,
    hamiltonian: Hamiltonian,
    config: QsciConfig = QsciConfig(),
    nelec: tuple[int, int] | None = None,
) -> QsciResult:
    """Batched QSCI over subsampled batches of a draw pool.

    The pool is either sampled from a state (``total_samples`` draws) or
    given directly. Each batch subsamples ``batch_size`` draws without
    replacement, filters them to the target sector, builds the symmetrized
    subspace and solves for its ground state. Batches whose valid set is
    empty are excluded and flagged. Worker threads are capped by the
    ``UCJKIT_NUM_THREADS`` environment variable (default 1); results are
    merged in batch order either way.

    The target sector defaults to the Hamiltonian's electron counts.

    Raises:
        ValueError: If every batch came up empty.
    """
    nelec = hamiltonian.nelec if nelec is None else nelec
    seed_seq = np.random.SeedSequence(config.seed)
    sample_seed, batch_seed = seed_seq.spawn(2)
    if isinstance(source, StateVector):
        pool = sample(source, config.total_samples, sample_seed)
    else:
        pool = source
    if len(pool) == 0:
        raise ValueError("sample pool is empty")

    rng = np.random.default_rng(batch_seed)
    size = min(config.batch_size, len(pool))
    batch_indices = [
        rng.choice(len(pool), size=size, replace=False) for _ in range(config.batches)
    ]

    ref_det = detci.hartree_fock_determinant(pool.norb, nelec)

    def solve(indices: np.ndarray):
        batch = SampleSet(
            norb=pool.norb,
            alpha=pool.alpha[indices],
            beta=pool.beta[indices],
            seed=pool.seed,
            source_dim=pool.source_dim,
        )
        valid = filter_valid(batch, nelec)
        if config.include_reference:
            valid = SampleSet(
                norb=valid.norb,
                alpha=np.concatenate([valid.alpha, [ref_det[0]]]),
                beta=np.concatenate([valid.beta, [ref_det[1]]]),
                seed=valid.seed,
                source_dim=valid.source_dim,
            )
        if len(valid) == 0:
            return None
        basis = build_subspace(valid, pool.norb, nelec)
        energy, vec = qsci_energy(basis, hamiltonian, tol=config.davidson_tol)
        return energy, vec, basis, len(valid)

    max_workers = max(1, int(os.environ.get(THREAD_ENV_VAR, "1")))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool_exec:
            outcomes = list(pool_exec.map(solve, batch_indices))
    else:
        outcomes = [solve(indices) for indices in batch_indices]

    energies: list[float] = []
    dims: list[int] = []
    strings: list[int] = []
    valid_counts: list[int] = []
    excluded: list[int] = []
    best: tuple[float, detci.CIVector] | None = None
    for b, outcome in enumerate(outcomes):
        if outcome is None:
            excluded.append(b)
            continue
        energy, vec, basis, n_valid = outcome
        energies.append(energy)
        dims.append(basis.dim)
        strings.append(int(round(np.sqrt(basis.dim))))
        valid_counts.append(n_valid)
        if best is None or energy < best[0]:
            best = (energy, vec)
    if best is None:
        raise ValueError("every batch had an empty valid sample set")

    return QsciResult(
        batch_energies=tuple(energies),
        subspace_dims=tuple(dims),
        string_counts=tuple(strings),
        valid_counts=tuple(valid_counts),
        excluded=tuple(excluded),
        mean_energy=float(np.mean(energies)),
        min_energy=float(np.min(energies)),
        max_energy=float(np.max(energies)),
        best_vector=best[1],
    )


def format_report(result: QsciResult) -> str:
    """Render a result as line-delimited batch records plus a summary row.

    Per included batch: batch index, valid draw count, string count |S|,
    subspace dimension, energy. Excluded batches are marked as such; the
    summary row carries mean, min, and max over the included batches.
    """
    lines = []
    pos = 0
    n_batches = len(result.batch_energies) + len(result.excluded)
    excluded = set(result.excluded)
    for b in range(n_batches):
        if b in excluded:
            lines.append(f"batch {b} excluded: no valid samples")
            continue
        lines.append(
            f"batch {b} valid {result.valid_counts[pos]} strings "
            f"{result.string_counts[pos]} dim {result.subspace_dims[pos]} "
            f"energy {result.batch_energies[pos]:.10f}"
        )
        pos += 1
    lines.append(
        f"summary mean {result.mean_energy:.10f} min {result.min_energy:.10f} "
        f"max {result.max_energy:.10f}"
    )
    return "\n".join(lines)
