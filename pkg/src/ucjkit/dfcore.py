"""Double factorization of t2 amplitudes into rotation/coupling term pairs.

A factorization is a list of terms ``(U, J)`` with ``U`` unitary and ``J``
real symmetric such that

    t2[i, j, a, b] = Im( sum_mu sum_pq J_mu[p, q]
                         * U_mu[nocc+a, p] * conj(U_mu[i, p])
                         * U_mu[nocc+b, q] * conj(U_mu[j, q]) ) * (-1)

i.e. the reconstruction is ``1j`` times the displayed contraction and the
occupied/virtual split of the orbital index is ``[0, nocc) / [nocc, norb)``.
"""

from __future__ import annotations

import dataclasses
import io
import typing

import numpy as np

__all__ = [
    "DFTerm",
    "DoubleFactorization",
    "double_factorize_t2",
    "reconstruct_t2",
    "truncate",
    "truncation_error",
    "read_df_file",
    "write_df_file",
]

# Eigenvalues and couplings below this magnitude are dropped outright.
NEGLIGIBLE = 1e-12


class DFTerm(typing.NamedTuple):
    """One factorization term: a unitary rotation and a symmetric coupling."""

    rotation: np.ndarray
    coupling: np.ndarray


@dataclasses.dataclass(frozen=True)
class DoubleFactorization:
    """Result of factorizing a t2 tensor.

    Attributes:
        norb: Total number of spatial orbitals.
        nocc: Number of occupied orbitals; ``nvir = norb - nocc``.
        rotations: Array of shape ``(nterms, norb, norb)`` of unitaries.
        couplings: Array of shape ``(nterms, norb, norb)`` of real symmetric
            coupling matrices, sorted by descending Frobenius norm.
    """

    norb: int
    nocc: int
    rotations: np.ndarray
    couplings: np.ndarray

    def __post_init__(self) -> None:
        nterms = len(self.couplings)
        if self.rotations.shape != (nterms, self.norb, self.norb):
            raise ValueError(
                f"rotations have shape {self.rotations.shape}, expected "
                f"({nterms}, {self.norb}, {self.norb})"
            )
        if self.couplings.shape != (nterms, self.norb, self.norb):
            raise ValueError(
                f"couplings have shape {self.couplings.shape}, expected "
                f"({nterms}, {self.norb}, {self.norb})"
            )
        if not 0 < self.nocc < self.norb:
            raise ValueError(f"nocc must lie strictly between 0 and norb, got {self.nocc}")

    @property
    def nterms(self) -> int:
        return len(self.couplings)

    @property
    def nvir(self) -> int:
        return self.norb - self.nocc

    @property
    def terms(self) -> tuple[DFTerm, ...]:
        return tuple(
            DFTerm(rotation=self.rotations[mu], coupling=self.couplings[mu])
            for mu in range(self.nterms)
        )


def _check_t2(t2: np.ndarray) -> tuple[int, int]:
    if t2.ndim != 4 or t2.shape[0] != t2.shape[1] or t2.shape[2] != t2.shape[3]:
        raise ValueError(f"t2 must have shape (nocc, nocc, nvir, nvir), got {t2.shape}")
    nocc, _, nvir, _ = t2.shape
    if not np.allclose(t2, t2.transpose(1, 0, 3, 2), atol=1e-10):
        raise ValueError("t2 must satisfy t2[i, j, a, b] == t2[j, i, b, a]")
    return nocc, nvir


def double_factorize_t2(t2: np.ndarray) -> DoubleFactorization:
    """Exactly factorize a real t2 tensor into rotation/coupling terms.

    The tensor is reshaped to the symmetric ``(nocc*nvir, nocc*nvir)`` matrix
    ``M[(i, a), (j, b)] = t2[i, j, a, b]`` and eigendecomposed; every retained
    eigenpair yields two terms whose couplings are negatives of each other and
    whose rotations are complex conjugates of each other.

    Args:
        t2: Real tensor of shape ``(nocc, nocc, nvir, nvir)`` with the
            ``t2[i, j, a, b] == t2[j, i, b, a]`` symmetry.

    Returns:
        A :class:`DoubleFactorization` with at most ``2 * nocc * nvir`` terms,
        sorted by descending coupling Frobenius norm (ties keep the emission
        order of the eigenpairs).
    """
    t2 = np.asarray(t2, dtype=float)
    nocc, nvir = _check_t2(t2)
    norb = nocc + nvir
    mat = t2.transpose(0, 2, 1, 3).reshape(nocc * nvir, nocc * nvir)
    eigs, vecs = np.linalg.eigh(mat)
    # Largest eigenvalues first so tie-breaking below is deterministic.
    order = np.argsort(-np.abs(eigs), kind="stable")

    rotations: list[np.ndarray] = []
    couplings: list[np.ndarray] = []
    for k in order:
        lam = eigs[k]
        if abs(lam) <= NEGLIGIBLE:
            continue
        vmat = vecs[:, k].reshape(nocc, nvir)
        gen = np.zeros((norb, norb))
        gen[nocc:, :nocc] = vmat.T
        # Hermitian matrix whose square carries the eigenpair's contribution.
        herm = (gen + gen.T) / 2 - 0.5j * (gen - gen.T)
        d, w = np.linalg.eigh(herm)
        coupling = lam * np.outer(d, d)
        if np.linalg.norm(coupling) <= NEGLIGIBLE:
            continue
        rotations.append(w)
        couplings.append(coupling)
        rotations.append(w.conj())
        couplings.append(-coupling)

    if not couplings:
        rotations_arr = np.zeros((0, norb, norb), dtype=complex)
        couplings_arr = np.zeros((0, norb, norb))
    else:
        rotations_arr = np.array(rotations, dtype=complex)
        couplings_arr = np.array(couplings)
    df = DoubleFactorization(norb=norb, nocc=nocc, rotations=rotations_arr, couplings=couplings_arr)
    return _sorted_by_coupling_norm(df)


def _sorted_by_coupling_norm(df: DoubleFactorization) -> DoubleFactorization:
    if df.nterms == 0:
        return df
    norms = np.linalg.norm(df.couplings.reshape(df.nterms, -1), axis=1)
    order = np.argsort(-norms, kind="stable")
    return DoubleFactorization(
        norb=df.norb,
        nocc=df.nocc,
        rotations=df.rotations[order],
        couplings=df.couplings[order],
    )


def reconstruct_t2(df: DoubleFactorization) -> np.ndarray:
    """Evaluate the factorization back into a t2 tensor (real part).

    For full factorizations of a real tensor the imaginary residue is
    negligible; truncations that split a conjugate term pair can leave one,
    and only the real part is returned either way.
    """
    return reconstruct_t2_complex(df).real


def reconstruct_t2_complex(df: DoubleFactorization) -> np.ndarray:
    """Evaluate the factorization including any imaginary residue."""
    nocc = df.nocc
    occ = df.rotations[:, :nocc, :]
    vir = df.rotations[:, nocc:, :]
    # t2[i, j, a, b] = 1j * J[m, p, q] U[m, a, p] U*[m, i, p] U[m, b, q] U*[m, j, q]
    left = np.einsum("map,mip->mpai", vir, occ.conj())
    return 1j * np.einsum("mpq,mpai,mqbj->ijab", df.couplings, left, left, optimize=True)


def truncate(df: DoubleFactorization, nterms: int) -> DoubleFactorization:
    """Keep the ``nterms`` largest-coupling terms of a factorization."""
    if not 0 <= nterms <= df.nterms:
        raise ValueError(
            f"nterms must lie in [0, {df.nterms}], got {nterms}"
        )
    return DoubleFactorization(
        norb=df.norb,
        nocc=df.nocc,
        rotations=df.rotations[:nterms].copy(),
        couplings=df.couplings[:nterms].copy(),
    )


def truncation_error(df: DoubleFactorization, t2: np.ndarray, nterms: int) -> float:
    """Frobenius-norm reconstruction error after keeping ``nterms`` terms."""
    recon = reconstruct_t2_complex(truncate(df, nterms))
    return float(np.linalg.norm(recon - np.asarray(t2)))


def write_df_file(df: DoubleFactorization, path: str) -> None:
    """Serialize a factorization to the ``DF v1`` container format."""
    with open(path, "wb") as handle:
        header = f"DF v1 {df.norb} {df.nocc} {df.nvir} {df.nterms}\n"
        handle.write(header.encode("ascii"))
        for mu in range(df.nterms):
            handle.write(np.ascontiguousarray(df.rotations[mu], dtype="<c16").tobytes())
            handle.write(np.ascontiguousarray(df.couplings[mu], dtype="<f8").tobytes())


def read_df_file(path: str) -> DoubleFactorization:
    """Read a factorization from the ``DF v1`` container format."""
    with open(path, "rb") as handle:
        header = handle.readline().decode("ascii").split()
        if len(header) != 6 or header[0] != "DF" or header[1] != "v1":
            raise ValueError(f"not a DF v1 file: header {header!r}")
        try:
            norb, nocc, nvir, nterms = (int(x) for x in header[2:])
        except ValueError as exc:
            raise ValueError(f"malformed DF v1 header: {header!r}") from exc
        if norb != nocc + nvir:
            raise ValueError(f"DF v1 header inconsistent: {norb} != {nocc} + {nvir}")
        payload = handle.read()
    expected = nterms * (norb * norb * 16 + norb * norb * 8)
    if len(payload) != expected:
        raise ValueError(f"DF v1 payload has {len(payload)} bytes, expected {expected}")
    stream = io.BytesIO(payload)
    rotations = np.zeros((nterms, norb, norb), dtype=complex)
    couplings = np.zeros((nterms, norb, norb))
    for mu in range(nterms):
        rotations[mu] = np.frombuffer(stream.read(norb * norb * 16), dtype="<c16").reshape(norb, norb)
        couplings[mu] = np.frombuffer(stream.read(norb * norb * 8), dtype="<f8").reshape(norb, norb)
    return DoubleFactorization(norb=norb, nocc=nocc, rotations=rotations, couplings=couplings)
