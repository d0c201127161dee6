"""Shared fixtures: toy Hamiltonians and random tensors with the right symmetries."""

from __future__ import annotations

import numpy as np
import pytest

from ucjkit.chemio import Hamiltonian


def make_chain_hamiltonian(
    norb: int, nelec: tuple[int, int], hopping: float = 1.0, repulsion: float = 2.0
) -> Hamiltonian:
    """Nearest-neighbor chain with on-site repulsion, in its one-body eigenbasis.

    Rotating into the eigenbasis of the hopping matrix makes the lowest-index
    orbitals the mean-field ground configuration, so the library's reference
    determinant is the sensible starting point.
    """
    h1_site = np.zeros((norb, norb))
    for p in range(norb - 1):
        h1_site[p, p + 1] = h1_site[p + 1, p] = -hopping
    _, cmat = np.linalg.eigh(h1_site)
    h1 = cmat.T @ h1_site @ cmat
    h2 = repulsion * np.einsum("pi,pj,pk,pl->ijkl", cmat, cmat, cmat, cmat)
    return Hamiltonian(norb=norb, nelec=nelec, h1=h1, h2=h2, ecore=0.0)


def make_random_hamiltonian(norb: int, nelec: tuple[int, int], seed: int) -> Hamiltonian:
    """Dense random integrals with full h1/h2 permutation symmetry."""
    rng = np.random.default_rng(seed)
    h1 = rng.normal(size=(norb, norb))
    h1 = (h1 + h1.T) / 2
    # Assign one value to all 8 permutation slots of each canonical (pq|rs)
    # class so the symmetry holds bit-exactly, not just to rounding.
    h2 = np.zeros((norb, norb, norb, norb))
    for p in range(norb):
        for q in range(p + 1):
            for r in range(p + 1):
                s_max = q if r == p else r
                for s in range(s_max + 1):
                    value = rng.normal()
                    for i, j, k, l in (
                        (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                        (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
                    ):
                        h2[i, j, k, l] = value
    return Hamiltonian(norb=norb, nelec=nelec, h1=h1, h2=h2, ecore=rng.normal())


def make_random_t2(nocc: int, nvir: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """Random doubles tensor with the t2[i,j,a,b] == t2[j,i,b,a] symmetry."""
    rng = np.random.default_rng(seed)
    t2 = scale * rng.normal(size=(nocc, nocc, nvir, nvir))
    return (t2 + t2.transpose(1, 0, 3, 2)) / 2


@pytest.fixture
def chain633() -> Hamiltonian:
    return make_chain_hamiltonian(6, (3, 3), repulsion=2.0)


@pytest.fixture
def chain422() -> Hamiltonian:
    return make_chain_hamiltonian(4, (2, 2), repulsion=2.0)
