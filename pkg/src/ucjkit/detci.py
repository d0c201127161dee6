"""Determinant-basis CI: Slater-Condon matrix elements, Davidson, FCI, CISD.

Determinants are pairs ``(occ_alpha, occ_beta)`` of occupation bitmasks over
spatial orbitals. The fermionic sign convention fixes each determinant as a
product of creation operators with the alpha block first, then the beta
block, orbitals ascending within each block.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from ucjkit.chemio import Amplitudes, Hamiltonian

__all__ = [
    "CIBasis",
    "CISDCoefficients",
    "CIVector",
    "ConvergenceError",
    "DAVIDSON_TOL",
    "apply_hamiltonian",
    "cisd_basis",
    "cisd_ground_state",
    "cisd_to_t_amplitudes",
    "davidson_lowest",
    "determinant_energy",
    "enumerate_basis",
    "extract_cisd_coefficients",
    "fci_ground_state",
    "full_sector_basis",
    "hamiltonian_element",
    "hamiltonian_matrix",
    "hartree_fock_determinant",
]

DAVIDSON_TOL = 1e-8
DAVIDSON_MAX_ITER = 200
DAVIDSON_MAX_SUBSPACE = 40
DENSE_FALLBACK_DIM = 512

Determinant = tuple[int, int]


class ConvergenceError(RuntimeError):
    """Raised when an iterative eigensolve ends without reaching tolerance."""


def _occupied(mask: int) -> list[int]:
    orbs = []
    orb = 0
    while mask:
        if mask & 1:
            orbs.append(orb)
        mask >>= 1
        orb += 1
    return orbs


def _parity_below(mask: int, orb: int) -> int:
    """Sign picked up moving an operator for ``orb`` past the occupied string."""
    return -1 if bin(mask & ((1 << orb) - 1)).count("1") % 2 else 1


def annihilate(det: Determinant, spin: int, orb: int) -> tuple[Determinant, int] | None:
    """Apply an annihilation operator; returns ``(det, sign)`` or None.

    ``spin`` is 0 for alpha, 1 for beta. Beta operators pick up an extra
    sign from crossing the whole alpha block.
    """
    amask, bmask = det
    mask = bmask if spin else amask
    if not mask & (1 << orb):
        return None
    sign = _parity_below(mask, orb)
    if spin:
        if bin(amask).count("1") % 2:
            sign = -sign
        return (amask, bmask & ~(1 << orb)), sign
    return (amask & ~(1 << orb), bmask), sign


def create(det: Determinant, spin: int, orb: int) -> tuple[Determinant, int] | None:
    """Apply a creation operator; returns ``(det, sign)`` or None."""
    amask, bmask = det
    mask = bmask if spin else amask
    if mask & (1 << orb):
        return None
    sign = _parity_below(mask, orb)
    if spin:
        if bin(amask).count("1") % 2:
            sign = -sign
        return (amask, bmask | (1 << orb)), sign
    return (amask | (1 << orb), bmask), sign


def hartree_fock_determinant(norb: int, nelec: tuple[int, int]) -> Determinant:
    """Reference determinant occupying the lowest orbitals of each spin."""
    n_alpha, n_beta = nelec
    if not (0 <= n_alpha <= norb and 0 <= n_beta <= norb):
        raise ValueError(f"nelec {nelec} out of range for norb={norb}")
    return (1 << n_alpha) - 1, (1 << n_beta) - 1


@dataclasses.dataclass(frozen=True)
class CIBasis:
    """Ordered determinant basis with index lookup.

    The canonical order sorts determinants by ``(occ_alpha, occ_beta)`` read
    as integers.
    """

    norb: int
    determinants: tuple[Determinant, ...]

    def __post_init__(self) -> None:
        dets = tuple(sorted(set(self.determinants)))
        object.__setattr__(self, "determinants", dets)
        object.__setattr__(self, "_index", {det: i for i, det in enumerate(dets)})

    @property
    def dim(self) -> int:
        return len(self.determinants)

    def index(self, det: Determinant) -> int | None:
        return self._index.get(det)

    def __contains__(self, det: Determinant) -> bool:
        return det in self._index


@dataclasses.dataclass(frozen=True)
class CIVector:
    """Coefficients over a determinant basis."""

    basis: CIBasis
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if self.coeffs.shape != (self.basis.dim,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, "
                f"expected ({self.basis.dim},)"
            )


@functools.lru_cache(maxsize=64)
def full_sector_basis(norb: int, nelec: tuple[int, int]) -> CIBasis:
    """All determinants with the given per-spin electron counts."""
    n_alpha, n_beta = nelec
    alphas = [_orbs_to_mask(c) for c in itertools.combinations(range(norb), n_alpha)]
    betas = [_orbs_to_mask(c) for c in itertools.combinations(range(norb), n_beta)]
    dets = tuple((a, b) for a in sorted(alphas) for b in sorted(betas))
    return CIBasis(norb=norb, determinants=dets)


def enumerate_basis(norb: int, n_alpha: int, n_beta: int) -> CIBasis:
    """All determinants of a fixed ``(n_alpha, n_beta)`` sector, in canonical order."""
    return full_sector_basis(norb, (n_alpha, n_beta))


@functools.lru_cache(maxsize=64)
def sector_strings(norb: int, nelec_spin: int) -> tuple[int, ...]:
    """Sorted single-spin occupation bitmasks with a given electron count."""
    return tuple(
        sorted(_orbs_to_mask(c) for c in itertools.combinations(range(norb), nelec_spin))
    )


def _orbs_to_mask(orbs) -> int:
    mask = 0
    for orb in orbs:
        mask |= 1 << orb
    return mask


def cisd_basis(norb: int, nelec: tuple[int, int]) -> CIBasis:
    """Reference determinant plus all single and double excitations."""
    ref = hartree_fock_determinant(norb, nelec)
    dets = {ref}
    singles = {0: list(_spin_singles(ref[0], norb)), 1: list(_spin_singles(ref[1], norb))}
    for amask, _ in singles[0]:
        dets.add((amask, ref[1]))
    for bmask, _ in singles[1]:
        dets.add((ref[0], bmask))
    for amask, _ in _spin_doubles(ref[0], norb):
        dets.add((amask, ref[1]))
    for bmask, _ in _spin_doubles(ref[1], norb):
        dets.add((ref[0], bmask))
    for amask, _ in singles[0]:
        for bmask, _ in singles[1]:
            dets.add((amask, bmask))
    return CIBasis(norb=norb, determinants=tuple(dets))


def _spin_singles(mask: int, norb: int):
    occ = _occupied(mask)
    vir = [p for p in range(norb) if not mask & (1 << p)]
    for i in occ:
        for a in vir:
            yield mask ^ (1 << i) | (1 << a), (i, a)


def _spin_doubles(mask: int, norb: int):
    occ = _occupied(mask)
    vir = [p for p in range(norb) if not mask & (1 << p)]
    for i, j in itertools.combinations(occ, 2):
        for a, b in itertools.combinations(vir, 2):
            yield mask ^ (1 << i) ^ (1 << j) | (1 << a) | (1 << b), (i, j, a, b)


def determinant_energy(hamiltonian: Hamiltonian, det: Determinant) -> float:
    """Diagonal Slater-Condon matrix element, core energy included."""
    h1, h2 = hamiltonian.h1, hamiltonian.h2
    occ_a = _occupied(det[0])
    occ_b = _occupied(det[1])
    energy = hamiltonian.ecore
    energy += sum(h1[p, p] for p in occ_a) + sum(h1[p, p] for p in occ_b)
    for occ in (occ_a, occ_b):
        for p in occ:
            for q in occ:
                energy += 0.5 * (h2[p, p, q, q] - h2[p, q, q, p])
    for p in occ_a:
        for q in occ_b:
            energy += h2[p, p, q, q]
    return float(energy)


def _single_sign(mask: int, i: int, a: int) -> int:
    """Parity of exciting i -> a within one spin block."""
    lo, hi = (i, a) if i < a else (a, i)
    between = mask & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    return -1 if bin(between).count("1") % 2 else 1


def _single_difference(ket: int, bra: int) -> tuple[int, int]:
    """Orbitals (i, a) for a one-orbital difference between two strings."""
    i = (ket & ~bra).bit_length() - 1
    a = (bra & ~ket).bit_length() - 1
    return i, a


def hamiltonian_element(
    det1: Determinant, det2: Determinant, hamiltonian: Hamiltonian
) -> float:
    """Slater-Condon matrix element between two determinants.

    Determinants differing in more than two spin orbitals, or belonging to
    different particle-number sectors, give zero.
    """
    h1, h2 = hamiltonian.h1, hamiltonian.h2
    bra_a, bra_b = det1
    ket_a, ket_b = det2
    if bin(bra_a).count("1") != bin(ket_a).count("1"):
        return 0.0
    if bin(bra_b).count("1") != bin(ket_b).count("1"):
        return 0.0
    ndiff_a = bin(bra_a ^ ket_a).count("1") // 2
    ndiff_b = bin(bra_b ^ ket_b).count("1") // 2
    ndiff = ndiff_a + ndiff_b

    if ndiff == 0:
        return determinant_energy(hamiltonian, det2)

    if ndiff == 1:
        spin = 0 if ndiff_a else 1
        ket_mask, bra_mask = (ket_a, bra_a) if spin == 0 else (ket_b, bra_b)
        i, a = _single_difference(ket_mask, bra_mask)
        same_mask, other_mask = (ket_a, ket_b) if spin == 0 else (ket_b, ket_a)
        elem = h1[i, a]
        for q in _occupied(same_mask):
            if q != i:
                elem += h2[i, a, q, q] - h2[i, q, q, a]
        for q in _occupied(other_mask):
            elem += h2[i, a, q, q]
        return float(_single_sign(ket_mask, i, a) * elem)

    if ndiff == 2 and (ndiff_a == 2 or ndiff_b == 2):
        ket_mask, bra_mask = (ket_a, bra_a) if ndiff_a == 2 else (ket_b, bra_b)
        i, j = sorted(_occupied(ket_mask & ~bra_mask))
        a, b = sorted(_occupied(bra_mask & ~ket_mask))
        inter = ket_mask ^ (1 << i) | (1 << a)
        sign = _single_sign(ket_mask, i, a) * _single_sign(inter, j, b)
        return float(sign * (h2[i, a, j, b] - h2[i, b, j, a]))

    if ndiff == 2:
        i, a = _single_difference(ket_a, bra_a)
        j, b = _single_difference(ket_b, bra_b)
        sign = _single_sign(ket_a, i, a) * _single_sign(ket_b, j, b)
        return float(sign * h2[i, a, j, b])

    return 0.0


def hamiltonian_matrix(basis: CIBasis, hamiltonian: Hamiltonian) -> scipy.sparse.csr_matrix:
    """Sparse Hamiltonian matrix over a determinant basis.

    Matrix elements follow the Slater-Condon rules with the module's sign
    convention. The result is real symmetric.
    """
    norb = basis.norb
    h1, h2 = hamiltonian.h1, hamiltonian.h2
    # (mp|qq) and (mq|qp) contracted lookup tables for single excitations.
    coul = np.einsum("mpqq->mpq", h2)
    exch = np.einsum("mqqp->mpq", h2)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    dim = basis.dim

    for col, det in enumerate(basis.determinants):
        amask, bmask = det
        occ_vec = np.zeros(norb)
        occ_same = [np.zeros(norb), np.zeros(norb)]
        for p in _occupied(amask):
            occ_vec[p] += 1
            occ_same[0][p] = 1
        for p in _occupied(bmask):
            occ_vec[p] += 1
            occ_same[1][p] = 1

        rows.append(col)
        cols.append(col)
        vals.append(determinant_energy(hamiltonian, det))

        # Single excitations, both spins.
        for spin, mask in ((0, amask), (1, bmask)):
            for new_mask, (i, a) in _spin_singles(mask, norb):
                new_det = (new_mask, bmask) if spin == 0 else (amask, new_mask)
                row = basis.index(new_det)
                if row is None:
                    continue
                elem = h1[i, a] + coul[i, a] @ occ_vec - exch[i, a] @ occ_same[spin]
                elem -= h2[i, a, i, i] - h2[i, i, i, a]  # q == i is not a spectator
                sign = _single_sign(mask, i, a)
                rows.append(row)
                cols.append(col)
                vals.append(sign * elem)

        # Same-spin double excitations.
        for spin, mask in ((0, amask), (1, bmask)):
            occ = _occupied(mask)
            vir = [p for p in range(norb) if not mask & (1 << p)]
            for i, j in itertools.combinations(occ, 2):
                for a, b in itertools.combinations(vir, 2):
                    new_mask = mask ^ (1 << i) ^ (1 << j) | (1 << a) | (1 << b)
                    new_det = (new_mask, bmask) if spin == 0 else (amask, new_mask)
                    row = basis.index(new_det)
                    if row is None:
                        continue
                    # Excite i -> a, then j -> b in the intermediate string.
                    inter = mask ^ (1 << i) | (1 << a)
                    sign = _single_sign(mask, i, a) * _single_sign(inter, j, b)
                    elem = h2[i, a, j, b] - h2[i, b, j, a]
                    rows.append(row)
                    cols.append(col)
                    vals.append(sign * elem)

        # Opposite-spin double excitations.
        for a_new, (i, a) in _spin_singles(amask, norb):
            sign_a = _single_sign(amask, i, a)
            for b_new, (j, b) in _spin_singles(bmask, norb):
                new_det = (a_new, b_new)
                row = basis.index(new_det)
                if row is None:
                    continue
                sign = sign_a * _single_sign(bmask, j, b)
                rows.append(row)
                cols.append(col)
                vals.append(sign * h2[i, a, j, b])

    mat = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim))
    return mat.tocsr()


def apply_hamiltonian(vec: CIVector, hamiltonian: Hamiltonian) -> CIVector:
    """Apply the Hamiltonian to a CI vector over its own basis."""
    mat = hamiltonian_matrix(vec.basis, hamiltonian)
    return CIVector(basis=vec.basis, coeffs=mat @ vec.coeffs)


def davidson_lowest(
    matvec,
    diag: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = DAVIDSON_TOL,
    max_iter: int = DAVIDSON_MAX_ITER,
    max_subspace: int = DAVIDSON_MAX_SUBSPACE,
) -> tuple[float, np.ndarray, dict]:
    """Lowest eigenpair of a symmetric operator by the Davidson method.

    Falls back to dense diagonalization for dimensions up to 512. On
    non-convergence the best iterate is returned with ``info["converged"]``
    set to False.

    Args:
        matvec: Callable computing the operator-vector product.
        diag: Operator diagonal, used for preconditioning.
        x0: Optional start vector; defaults to the unit vector at the
            smallest diagonal entry.
        tol: Convergence threshold on the residual 2-norm.
        max_iter: Maximum number of Davidson iterations.
        max_subspace: Subspace size triggering a restart.

    Returns:
        Tuple ``(eigenvalue, eigenvector, info)`` where info reports
        ``converged``, ``iterations`` and the final ``residual`` norm.
    """
    dim = len(diag)
    if dim == 0:
        raise ValueError("cannot diagonalize an empty basis")
    if dim <= DENSE_FALLBACK_DIM:
        dense = np.zeros((dim, dim))
        eye = np.eye(dim)
        for k in range(dim):
            dense[:, k] = matvec(eye[:, k])
        eigs, vecs = np.linalg.eigh(dense)
        return float(eigs[0]), vecs[:, 0], {"converged": True, "iterations": 0, "residual": 0.0}

    if x0 is None:
        x0 = np.zeros(dim)
        x0[int(np.argmin(diag))] = 1.0
    vec = x0 / np.linalg.norm(x0)

    subspace: list[np.ndarray] = [vec]
    products: list[np.ndarray] = [matvec(vec)]
    best_val = float(vec @ products[0])
    best_vec = vec
    residual_norm = np.inf

    for iteration in range(1, max_iter + 1):
        vmat = np.array(subspace).T
        wmat = np.array(products).T
        proj = vmat.T @ wmat
        proj = (proj + proj.T) / 2
        eigs, eigvecs = np.linalg.eigh(proj)
        theta = float(eigs[0])
        ritz = vmat @ eigvecs[:, 0]
        hritz = wmat @ eigvecs[:, 0]
        residual = hritz - theta * ritz
        residual_norm = float(np.linalg.norm(residual))
        best_val, best_vec = theta, ritz
        if residual_norm <= tol:
            return theta, ritz, {
                "converged": True,
                "iterations": iteration,
                "residual": residual_norm,
            }
        if len(subspace) >= max_subspace:
            subspace = [ritz]
            products = [hritz]
            continue
        denom = diag - theta
        denom = np.where(np.abs(denom) < 1e-8, np.copysign(1e-8, denom), denom)
        correction = residual / denom
        # Orthogonalize twice against the current subspace.
        for _ in range(2):
            for basis_vec in subspace:
                correction = correction - (basis_vec @ correction) * basis_vec
        norm = np.linalg.norm(correction)
        if norm < 1e-12:
            break
        correction = correction / norm
        subspace.append(correction)
        products.append(matvec(correction))

    return best_val, best_vec, {
        "converged": False,
        "iterations": max_iter,
        "residual": residual_norm,
    }


def _lowest_eigenpair(basis: CIBasis, hamiltonian: Hamiltonian) -> tuple[float, np.ndarray, dict]:
    mat = hamiltonian_matrix(basis, hamiltonian)
    diag = mat.diagonal()
    energy, vec, info = davidson_lowest(lambda v: mat @ v, diag)
    if not info["converged"]:
        raise ConvergenceError(
            f"eigensolve stalled at residual {info['residual']:.3e} "
            f"after {info['iterations']} iterations"
        )
    return energy, vec, info


def fci_ground_state(
    hamiltonian: Hamiltonian, nelec: tuple[int, int] | None = None
) -> tuple[float, CIVector]:
    """Ground state in the full determinant sector."""
    nelec = hamiltonian.nelec if nelec is None else nelec
    basis = full_sector_basis(hamiltonian.norb, nelec)
    energy, vec, _ = _lowest_eigenpair(basis, hamiltonian)
    return energy, CIVector(basis=basis, coeffs=vec)


MIN_REFERENCE_WEIGHT = 1e-8


@dataclasses.dataclass(frozen=True)
class CISDCoefficients:
    """Normalized CI coefficients of a singles-and-doubles wavefunction.

    Attributes:
        c0: Reference coefficient, fixed positive by a global sign choice.
        c1: Alpha single-excitation coefficients, shape ``(nocc, nvir)``.
        c2: Alpha-beta double-excitation coefficients, shape
            ``(nocc, nocc, nvir, nvir)``, symmetrized so that
            ``c2[i, j, a, b] == c2[j, i, b, a]``.
    """

    c0: float
    c1: np.ndarray
    c2: np.ndarray

    def __post_init__(self) -> None:
        nocc, nvir = self.c1.shape
        if self.c2.shape != (nocc, nocc, nvir, nvir):
            raise ValueError(
                f"c2 has shape {self.c2.shape}, expected {(nocc, nocc, nvir, nvir)}"
            )

    @property
    def nocc(self) -> int:
        return self.c1.shape[0]

    @property
    def nvir(self) -> int:
        return self.c1.shape[1]


def cisd_ground_state(
    hamiltonian: Hamiltonian, nelec: tuple[int, int] | None = None
) -> tuple[float, CISDCoefficients]:
    """Ground state in the reference-plus-singles-and-doubles space.

    Returns the variational energy and the extracted CI coefficients; the
    sector must be a closed shell for the coefficient read-off to be defined.
    """
    nelec = hamiltonian.nelec if nelec is None else nelec
    basis = cisd_basis(hamiltonian.norb, nelec)
    energy, vec, _ = _lowest_eigenpair(basis, hamiltonian)
    civec = CIVector(basis=basis, coeffs=vec)
    return energy, extract_cisd_coefficients(civec, nelec)


def extract_cisd_coefficients(
    civec: CIVector, nelec: tuple[int, int]
) -> CISDCoefficients:
    """Read reference, single, and double coefficients off a CI vector.

    Coefficients are overlaps with the alpha singles and the alpha-beta
    doubles of the reference determinant, sign-fixed by the creation-ordering
    convention ``c+_a c+_b c_j c_i``, after normalizing the vector and fixing
    the reference coefficient positive.

    Args:
        civec: CI vector whose basis contains the reference determinant and
            its single and double excitations.
        nelec: Per-spin electron counts; must be a closed shell.

    Raises:
        ValueError: For an open-shell sector or a reference weight below
            ``1e-8``.
    """
    n_alpha, n_beta = nelec
    if n_alpha != n_beta:
        raise ValueError("coefficient extraction requires a closed-shell sector")
    norb = civec.basis.norb
    nocc = n_alpha
    nvir = norb - nocc
    ref = hartree_fock_determinant(norb, nelec)
    ref_idx = civec.basis.index(ref)
    if ref_idx is None:
        raise ValueError("CI basis does not contain the reference determinant")

    coeffs = np.real_if_close(civec.coeffs)
    coeffs = coeffs / np.linalg.norm(coeffs)
    c0 = coeffs[ref_idx]
    if abs(c0) < MIN_REFERENCE_WEIGHT:
        raise ValueError(
            f"reference weight {abs(c0):.3e} below {MIN_REFERENCE_WEIGHT:.0e}; "
            "amplitudes are not defined"
        )
    if c0 < 0:
        coeffs = -coeffs
        c0 = -c0

    c1 = np.zeros((nocc, nvir))
    for i in range(nocc):
        for a in range(nvir):
            det, sign = _apply_string(ref, ((0, 0, i), (1, 0, nocc + a)))
            idx = civec.basis.index(det)
            if idx is not None:
                c1[i, a] = sign * coeffs[idx]

    c2 = np.zeros((nocc, nocc, nvir, nvir))
    for i in range(nocc):
        for j in range(nocc):
            for a in range(nvir):
                for b in range(nvir):
                    # c+_{a,alpha} c+_{b,beta} c_{j,beta} c_{i,alpha}
                    ops = (
                        (0, 0, i),
                        (0, 1, j),
                        (1, 1, nocc + b),
                        (1, 0, nocc + a),
                    )
                    det, sign = _apply_string(ref, ops)
                    idx = civec.basis.index(det)
                    if idx is not None:
                        c2[i, j, a, b] = sign * coeffs[idx]
    c2 = (c2 + c2.transpose(1, 0, 3, 2)) / 2
    return CISDCoefficients(c0=float(c0), c1=c1, c2=c2)


def cisd_to_t_amplitudes(coefficients: CISDCoefficients) -> Amplitudes:
    """Convert CI coefficients to cluster amplitudes.

    Uses ``t1 = c1 / c0`` and
    ``t2[i, j, a, b] = c2[i, j, a, b] / c0 - t1[i, a] * t1[j, b] / 2``; the
    quadratic correction removes the disconnected part of the doubles to
    leading order.
    """
    t1 = coefficients.c1 / coefficients.c0
    t2 = coefficients.c2 / coefficients.c0 - np.einsum("ia,jb->ijab", t1, t1) / 2
    return Amplitudes(t1=t1, t2=t2)


def _apply_string(det: Determinant, ops) -> tuple[Determinant, int]:
    """Apply (is_creation, spin, orb) operators right-to-left; total sign."""
    sign = 1
    for is_creation, spin, orb in ops:
        result = create(det, spin, orb) if is_creation else annihilate(det, spin, orb)
        if result is None:
            raise ValueError("operator string annihilates the determinant")
        det, s = result
        sign *= s
    return det, sign
