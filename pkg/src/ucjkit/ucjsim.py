"""Exact statevector simulation of unitary cluster Jastrow circuits.

States live in a fixed particle-number sector ``(n_alpha, n_beta)`` of spatial
orbitals, stored over the canonical determinant order of
:func:`ucjkit.detci.full_sector_basis`. Orbital rotations act through the
one-body generator exponential on each spin's string space, so everything is
unitary to machine precision.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from ucjkit import detci
from ucjkit.chemio import Hamiltonian, SampleSet
from ucjkit.compress import ConnectivityMask, _principal_log_unitary
from ucjkit.dfcore import DoubleFactorization

__all__ = [
    "SampleSet",
    "StateVector",
    "UCJOperator",
    "apply_diagonal_coulomb",
    "apply_orbital_rotation",
    "entropy",
    "prepare_hartree_fock",
    "prepare_ucj_state",
    "sample",
    "ucj_from_df",
    "vqe_energy",
]

UNITARITY_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class StateVector:
    """Statevector over the full ``(n_alpha, n_beta)`` sector.

    Amplitudes follow the canonical determinant order (alpha string major,
    beta string minor, both ascending as integers).
    """

    norb: int
    nelec: tuple[int, int]
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        dim = self.dim
        if self.amplitudes.shape != (dim,):
            raise ValueError(
                f"amplitude vector has shape {self.amplitudes.shape}, expected ({dim},)"
            )

    @property
    def alpha_strings(self) -> tuple[int, ...]:
        return detci.sector_strings(self.norb, self.nelec[0])

    @property
    def beta_strings(self) -> tuple[int, ...]:
        return detci.sector_strings(self.norb, self.nelec[1])

    @property
    def dim(self) -> int:
        return len(self.alpha_strings) * len(self.beta_strings)

    @property
    def basis(self) -> detci.CIBasis:
        return detci.full_sector_basis(self.norb, self.nelec)

    def as_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to (alpha strings, beta strings)."""
        return self.amplitudes.reshape(len(self.alpha_strings), len(self.beta_strings))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def prepare_hartree_fock(norb: int, nelec: tuple[int, int]) -> StateVector:
    """Product state occupying the lowest orbitals of each spin."""
    det = detci.hartree_fock_determinant(norb, nelec)
    basis = detci.full_sector_basis(norb, nelec)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(det)] = 1.0
    return StateVector(norb=norb, nelec=nelec, amplitudes=amps)


def _unitary_exp(generator: np.ndarray) -> np.ndarray:
    """Exact unitary exponential of an antihermitian matrix."""
    herm = -1j * generator
    eigs, vecs = np.linalg.eigh(herm)
    return (vecs * np.exp(1j * eigs)) @ vecs.conj().T


def _string_generator_matrix(
    generator: np.ndarray, strings: tuple[int, ...], norb: int
) -> np.ndarray:
    """Matrix of a one-body operator on single-spin occupation strings."""
    dim = len(strings)
    index = {s: i for i, s in enumerate(strings)}
    mat = np.zeros((dim, dim), dtype=complex)
    for col, mask in enumerate(strings):
        occ = [p for p in range(norb) if mask & (1 << p)]
        mat[col, col] = sum(generator[p, p] for p in occ)
        for q in occ:
            for p in range(norb):
                if mask & (1 << p):
                    continue
                new_mask = mask ^ (1 << q) | (1 << p)
                sign = detci._single_sign(mask, q, p)
                mat[index[new_mask], col] += sign * generator[p, q]
    return mat


def apply_orbital_rotation(state: StateVector, unitary: np.ndarray) -> StateVector:
    """Rotate the orbital basis of both spins by a unitary matrix.

    Args:
        state: Input state.
        unitary: ``(norb, norb)`` unitary applied to both spin species.

    Raises:
        ValueError: If the matrix is not unitary to within 1e-8.
    """
    unitary = np.asarray(unitary, dtype=complex)
    if unitary.shape != (state.norb, state.norb):
        raise ValueError(f"rotation has shape {unitary.shape}, expected ({state.norb}, {state.norb})")
    defect = np.max(np.abs(unitary.conj().T @ unitary - np.eye(state.norb)))
    if defect > UNITARITY_TOL:
        raise ValueError(f"matrix is not unitary: max |U+U - I| = {defect:.3e}")
    generator = _principal_log_unitary(unitary)

    mat = state.as_matrix()
    for axis, strings in ((0, state.alpha_strings), (1, state.beta_strings)):
        gen_mat = _string_generator_matrix(generator, strings, state.norb)
        rot = _unitary_exp(gen_mat)
        mat = np.tensordot(rot, mat, axes=([1], [axis]))
        if axis == 1:
            mat = mat.T
    return StateVector(norb=state.norb, nelec=state.nelec, amplitudes=mat.reshape(-1))


def _occupancy_table(strings: tuple[int, ...], norb: int) -> np.ndarray:
    table = np.zeros((len(strings), norb))
    for i, mask in enumerate(strings):
        for p in range(norb):
            if mask & (1 << p):
                table[i, p] = 1.0
    return table


def _check_symmetric(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if np.max(np.abs(mat - mat.T)) > 1e-10:
        raise ValueError(f"{name} coupling matrix must be symmetric")
    return mat


def apply_diagonal_coulomb(
    state: StateVector, coupling_aa: np.ndarray, coupling_ab: np.ndarray
) -> StateVector:
    """Apply the diagonal phase ``exp(i * theta(d))`` to every determinant.

    The phase of determinant ``d`` with occupations ``n_up``, ``n_dn`` is

        theta(d) = 1/2 * sum_ij J_aa[i, j] * (n_up[i] n_up[j] + n_dn[i] n_dn[j])
                   + sum_ij J_ab[i, j] * n_up[i] n_dn[j]

    Args:
        state: Input state.
        coupling_aa: Same-spin coupling matrix, real symmetric.
        coupling_ab: Opposite-spin coupling matrix, real symmetric.
    """
    j_aa = _check_symmetric(coupling_aa, "same-spin")
    j_ab = _check_symmetric(coupling_ab, "opposite-spin")
    occ_a = _occupancy_table(state.alpha_strings, state.norb)
    occ_b = _occupancy_table(state.beta_strings, state.norb)
    theta_a = 0.5 * np.einsum("sp,pq,sq->s", occ_a, j_aa, occ_a)
    theta_b = 0.5 * np.einsum("sp,pq,sq->s", occ_b, j_aa, occ_b)
    cross = occ_a @ j_ab @ occ_b.T
    phases = np.exp(1j * (theta_a[:, None] + theta_b[None, :] + cross))
    mat = state.as_matrix() * phases
    return StateVector(norb=state.norb, nelec=state.nelec, amplitudes=mat.reshape(-1))


@dataclasses.dataclass(frozen=True)
class UCJOperator:
    """Parameters of a (local) unitary cluster Jastrow circuit.

    Attributes:
        rotations: ``(n_reps, norb, norb)`` unitaries, one per repetition.
        couplings_aa: Same-spin coupling matrices, ``(n_reps, norb, norb)``,
            real symmetric.
        couplings_ab: Opposite-spin coupling matrices, same shape and
            symmetry.
        final_rotation: Optional orbital rotation applied after all reps.

    Construction validates unitarity of every rotation to 1e-10 and symmetry
    of every coupling matrix to 1e-12.
    """

    rotations: np.ndarray
    couplings_aa: np.ndarray
    couplings_ab: np.ndarray
    final_rotation: np.ndarray | None = None

    def __post_init__(self) -> None:
        n_reps = len(self.rotations)
        norb = self.norb
        for name, arr in (
            ("rotations", self.rotations),
            ("couplings_aa", self.couplings_aa),
            ("couplings_ab", self.couplings_ab),
        ):
            if arr.shape != (n_reps, norb, norb):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(n_reps, norb, norb)}")
        if self.final_rotation is not None and self.final_rotation.shape != (norb, norb):
            raise ValueError("final_rotation must be a (norb, norb) matrix")
        eye = np.eye(norb)
        unitaries = list(self.rotations)
        if self.final_rotation is not None:
            unitaries.append(self.final_rotation)
        for unitary in unitaries:
            defect = np.max(np.abs(unitary.conj().T @ unitary - eye)) if norb else 0.0
            if defect > 1e-10:
                raise ValueError(f"rotation is not unitary: max |U+U - I| = {defect:.3e}")
        for name, arr in (("couplings_aa", self.couplings_aa), ("couplings_ab", self.couplings_ab)):
            if arr.size and np.max(np.abs(arr - np.transpose(arr, (0, 2, 1)))) > 1e-12:
                raise ValueError(f"{name} must be symmetric")

    @property
    def norb(self) -> int:
        return self.rotations.shape[-1]

    @property
    def n_reps(self) -> int:
        return len(self.rotations)


def ucj_from_df(
    df: DoubleFactorization,
    t1: np.ndarray | None = None,
    mask: ConnectivityMask | None = None,
) -> UCJOperator:
    """Build circuit parameters from a double factorization.

    Each factorization term becomes one repetition with the term's coupling
    feeding both spin blocks, restricted per block by the mask. With t1
    amplitudes a final orbital rotation ``exp(K1)`` is attached, where ``K1``
    is the real antisymmetric generator whose virtual-occupied block holds
    the t1 entries.
    """
    couplings_aa = np.array(df.couplings)
    couplings_ab = np.array(df.couplings)
    if mask is not None:
        if mask.norb != df.norb:
            raise ValueError(f"mask is for norb={mask.norb}, factorization has norb={df.norb}")
        couplings_aa = np.array(
            [mask.apply(j, "aa") for j in df.couplings]
        ).reshape(np.shape(df.couplings))
        couplings_ab = np.array(
            [mask.apply(j, "ab") for j in df.couplings]
        ).reshape(np.shape(df.couplings))
    final = None
    if t1 is not None:
        t1 = np.asarray(t1, dtype=float)
        nocc = df.nocc
        if t1.shape != (nocc, df.norb - nocc):
            raise ValueError(f"t1 has shape {t1.shape}, expected {(nocc, df.norb - nocc)}")
        gen = np.zeros((df.norb, df.norb))
        gen[nocc:, :nocc] = t1.T
        gen = gen - gen.T
        final = _unitary_exp(gen.astype(complex))
    return UCJOperator(
        rotations=np.array(df.rotations),
        couplings_aa=couplings_aa,
        couplings_ab=couplings_ab,
        final_rotation=final,
    )


def prepare_ucj_state(operator: UCJOperator, reference: StateVector) -> StateVector:
    """Apply a UCJ circuit to a reference state.

    Repetitions act in index order, each as: rotate by ``U+``, apply the
    diagonal Coulomb phases, rotate back by ``U``. The final orbital
    rotation, if present, acts last.
    """
    state = reference
    for mu in range(operator.n_reps):
        unitary = operator.rotations[mu]
        state = apply_orbital_rotation(state, unitary.conj().T)
        state = apply_diagonal_coulomb(
            state, operator.couplings_aa[mu], operator.couplings_ab[mu]
        )
        state = apply_orbital_rotation(state, unitary)
    if operator.final_rotation is not None:
        state = apply_orbital_rotation(state, operator.final_rotation)
    return state


def vqe_energy(state: StateVector, hamiltonian: Hamiltonian) -> float:
    """Expectation value of the Hamiltonian in a statevector."""
    if hamiltonian.norb != state.norb:
        raise ValueError("state and Hamiltonian orbital counts differ")
    civec = detci.CIVector(basis=state.basis, coeffs=state.amplitudes)
    hvec = detci.apply_hamiltonian(civec, hamiltonian)
    return float(np.real(np.vdot(state.amplitudes, hvec.coeffs)))


def sample(state: StateVector, shots: int, seed) -> SampleSet:
    """Draw determinants from the state's Born distribution.

    Uses inverse-CDF sampling over the canonical determinant order, so a
    fixed seed fixes the draws exactly.

    Raises:
        ValueError: If the state is not normalized to within 1e-8.
    """
    if shots < 0:
        raise ValueError(f"shots must be nonnegative, got {shots}")
    probs = state.probabilities()
    total = probs.sum()
    if not np.isfinite(total) or abs(total - 1.0) > 1e-8:
        raise ValueError(f"state is not normalized: total probability {total!r}")
    cdf = np.cumsum(probs / total)
    cdf[-1] = 1.0
    rng = np.random.default_rng(seed)
    draws = np.searchsorted(cdf, rng.random(shots), side="right")
    basis = state.basis
    det_a = np.array([det[0] for det in basis.determinants], dtype=np.int64)
    det_b = np.array([det[1] for det in basis.determinants], dtype=np.int64)
    seed_val = seed if isinstance(seed, int) else None
    return SampleSet(
        norb=state.norb,
        alpha=det_a[draws],
        beta=det_b[draws],
        seed=seed_val,
        source_dim=basis.dim,
    )


def entropy(state: StateVector) -> float:
    """Shannon entropy (natural log) of the sampling distribution."""
    probs = state.probabilities()
    probs = probs[probs > 0]
    probs = probs / probs.sum()
    return float(-np.sum(probs * np.log(probs)))


def write_ucj_file(operator: UCJOperator, path: str) -> None:
    """Serialize circuit parameters to the ``UCJ v1`` container format."""
    has_final = 1 if operator.final_rotation is not None else 0
    with open(path, "wb") as handle:
        handle.write(f"UCJ v1 {operator.norb} {operator.n_reps} {has_final}\n".encode("ascii"))
        for mu in range(operator.n_reps):
            handle.write(np.ascontiguousarray(operator.rotations[mu], dtype="<c16").tobytes())
            handle.write(np.ascontiguousarray(operator.couplings_aa[mu], dtype="<f8").tobytes())
            handle.write(np.ascontiguousarray(operator.couplings_ab[mu], dtype="<f8").tobytes())
        if has_final:
            handle.write(np.ascontiguousarray(operator.final_rotation, dtype="<c16").tobytes())


def read_ucj_file(path: str) -> UCJOperator:
    """Read circuit parameters from the ``UCJ v1`` container format."""
    with open(path, "rb") as handle:
        header = handle.readline().decode("ascii").split()
        if len(header) != 5 or header[0] != "UCJ" or header[1] != "v1":
            raise ValueError(f"not a UCJ v1 file: header {header!r}")
        try:
            norb, n_reps, has_final = (int(x) for x in header[2:])
        except ValueError as exc:
            raise ValueError(f"malformed UCJ v1 header: {header!r}") from exc
        if has_final not in (0, 1):
            raise ValueError(f"malformed UCJ v1 header: has_final={has_final}")
        payload = handle.read()
    per_rep = norb * norb * (16 + 8 + 8)
    expected = n_reps * per_rep + (norb * norb * 16 if has_final else 0)
    if len(payload) != expected:
        raise ValueError(f"UCJ v1 payload has {len(payload)} bytes, expected {expected}")
    rotations = np.zeros((n_reps, norb, norb), dtype=complex)
    couplings_aa = np.zeros((n_reps, norb, norb))
    couplings_ab = np.zeros((n_reps, norb, norb))
    offset = 0
    for mu in range(n_reps):
        rotations[mu] = np.frombuffer(payload, dtype="<c16", count=norb * norb, offset=offset).reshape(norb, norb)
        offset += norb * norb * 16
        couplings_aa[mu] = np.frombuffer(payload, dtype="<f8", count=norb * norb, offset=offset).reshape(norb, norb)
        offset += norb * norb * 8
        couplings_ab[mu] = np.frombuffer(payload, dtype="<f8", count=norb * norb, offset=offset).reshape(norb, norb)
        offset += norb * norb * 8
    final = None
    if has_final:
        final = np.frombuffer(payload, dtype="<c16", count=norb * norb, offset=offset).reshape(norb, norb).copy()
    return UCJOperator(
        rotations=rotations,
        couplings_aa=couplings_aa,
        couplings_ab=couplings_ab,
        final_rotation=final,
    )
