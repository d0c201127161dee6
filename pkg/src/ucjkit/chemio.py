"""Molecular Hamiltonian and amplitude containers plus their file formats.

Two-electron integrals use the chemists' convention ``(pq|rs)`` throughout,
stored densely with all eight index permutations populated.
"""

from __future__ import annotations

import dataclasses
import re

import numpy as np

__all__ = [
    "Amplitudes",
    "Hamiltonian",
    "SampleSet",
    "parse_fcidump",
    "read_amplitudes",
    "read_bitstrings",
    "read_fcidump",
    "write_amplitudes",
    "write_bitstrings",
    "write_fcidump",
]

# Tolerance for conflicting duplicate FCIDUMP entries and for the
# symmetry checks run at construction/load time.
DUPLICATE_TOL = 1e-10
SYMMETRY_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class Hamiltonian:
    """Second-quantized Hamiltonian in a spatial-orbital basis.

    Attributes:
        norb: Number of spatial orbitals.
        nelec: Pair ``(n_alpha, n_beta)`` of electron counts.
        h1: One-electron integrals, shape ``(norb, norb)``, symmetric.
        h2: Two-electron integrals ``(pq|rs)``, shape ``(norb,) * 4``, with
            the eight-fold permutation symmetry of real orbitals.
        ecore: Scalar core (nuclear repulsion plus frozen) energy.
    """

    norb: int
    nelec: tuple[int, int]
    h1: np.ndarray
    h2: np.ndarray
    ecore: float = 0.0

    def __post_init__(self) -> None:
        if self.h1.shape != (self.norb, self.norb):
            raise ValueError(f"h1 has shape {self.h1.shape}, expected ({self.norb}, {self.norb})")
        if self.h2.shape != (self.norb,) * 4:
            raise ValueError(f"h2 has shape {self.h2.shape}, expected {(self.norb,) * 4}")
        n_alpha, n_beta = self.nelec
        if not (0 <= n_alpha <= self.norb and 0 <= n_beta <= self.norb):
            raise ValueError(f"nelec {self.nelec} out of range for norb={self.norb}")
        scale1 = max(1.0, float(np.max(np.abs(self.h1))) if self.h1.size else 1.0)
        if np.max(np.abs(self.h1 - self.h1.T)) > SYMMETRY_TOL * scale1:
            raise ValueError("h1 must be symmetric")
        scale2 = max(1.0, float(np.max(np.abs(self.h2))) if self.h2.size else 1.0)
        for axes in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if np.max(np.abs(self.h2 - self.h2.transpose(axes))) > SYMMETRY_TOL * scale2:
                raise ValueError("h2 must have the (pq|rs) eight-fold permutation symmetry")


@dataclasses.dataclass(frozen=True)
class Amplitudes:
    """Cluster amplitudes t1 (shape ``(nocc, nvir)``) and t2.

    t2 has shape ``(nocc, nocc, nvir, nvir)`` and must satisfy the exchange
    symmetry ``t2[i, j, a, b] == t2[j, i, b, a]``; this is validated at
    construction time.
    """

    t1: np.ndarray
    t2: np.ndarray

    def __post_init__(self) -> None:
        if self.t1.ndim != 2:
            raise ValueError(f"t1 must be 2-dimensional, got shape {self.t1.shape}")
        nocc, nvir = self.t1.shape
        if self.t2.shape != (nocc, nocc, nvir, nvir):
            raise ValueError(
                f"t2 has shape {self.t2.shape}, expected {(nocc, nocc, nvir, nvir)}"
            )
        dev = np.max(np.abs(self.t2 - self.t2.transpose(1, 0, 3, 2)))
        if dev > SYMMETRY_TOL:
            raise ValueError(
                f"t2 violates t2[i, j, a, b] == t2[j, i, b, a] by {dev:.3e}"
            )
        if not (np.all(np.isfinite(self.t1)) and np.all(np.isfinite(self.t2))):
            raise ValueError("amplitudes must be finite")

    @property
    def nocc(self) -> int:
        return self.t1.shape[0]

    @property
    def nvir(self) -> int:
        return self.t1.shape[1]


@dataclasses.dataclass(frozen=True)
class SampleSet:
    """Determinant draws with multiplicity, plus their provenance.

    Attributes:
        norb: Number of spatial orbitals.
        alpha: Per-draw alpha occupation bitmasks.
        beta: Per-draw beta occupation bitmasks.
        seed: Seed the draws were generated with (None for file input).
        source_dim: Dimension of the sampled distribution (0 if unknown).
    """

    norb: int
    alpha: np.ndarray
    beta: np.ndarray
    seed: int | None = None
    source_dim: int = 0

    def __post_init__(self) -> None:
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return len(self.alpha)


_HEADER_KV = re.compile(r"([A-Za-z0-9_]+)\s*=\s*([-0-9]+)")


def read_fcidump(path: str) -> Hamiltonian:
    """Parse an FCIDUMP file; see :func:`parse_fcidump` for the format."""
    with open(path) as handle:
        text = handle.read()
    return parse_fcidump(text, source=path)


def parse_fcidump(text: str, source: str = "<string>") -> Hamiltonian:
    """Parse FCIDUMP text (Molpro convention).

    The header is ``&FCI NORB=..,NELEC=..,MS2=..`` (possibly spanning lines)
    terminated by ``&END`` or a lone ``/``. Data lines are ``value p q r s``
    with 1-based indices: ``p q 0 0`` one-electron integrals, ``0 0 0 0`` the
    core energy, anything else a two-electron integral ``(pq|rs)`` whose
    eight permutations are all populated. Duplicate entries that disagree by
    more than ``1e-10`` raise; agreeing duplicates keep the last occurrence.

    Args:
        text: Full file content.
        source: Label used in error messages.

    Raises:
        ValueError: On a malformed header, out-of-range indices, malformed
            data lines, or conflicting duplicate entries.
    """
    stripped = text.lstrip()
    if not stripped.upper().startswith("&FCI"):
        raise ValueError(f"{source}: FCIDUMP must start with &FCI")
    upper = stripped.upper()
    end_match = re.search(r"&END|^\s*/\s*$", upper, flags=re.MULTILINE)
    if end_match is None:
        raise ValueError(f"{source}: FCIDUMP header missing &END (or /) terminator")
    header = stripped[4 : end_match.start()]
    body = stripped[end_match.end() :]

    fields = {key.upper(): int(val) for key, val in _HEADER_KV.findall(header)}
    if "NORB" not in fields or "NELEC" not in fields:
        raise ValueError(f"{source}: FCIDUMP header must define NORB and NELEC")
    norb = fields["NORB"]
    nelec = fields["NELEC"]
    ms2 = fields.get("MS2", 0)
    if norb <= 0:
        raise ValueError(f"{source}: NORB must be positive, got {norb}")
    if (nelec + ms2) % 2 != 0 or not 0 <= nelec <= 2 * norb:
        raise ValueError(f"{source}: inconsistent NELEC={nelec}, MS2={ms2}")
    n_alpha = (nelec + ms2) // 2
    n_beta = (nelec - ms2) // 2
    if n_beta < 0 or n_alpha > norb or n_beta > norb:
        raise ValueError(f"{source}: inconsistent NELEC={nelec}, MS2={ms2}")

    h1 = np.zeros((norb, norb))
    h2 = np.zeros((norb,) * 4)
    seen1 = np.zeros((norb, norb), dtype=bool)
    seen2 = np.zeros((norb,) * 4, dtype=bool)
    ecore = 0.0
    seen_core = False

    for lineno, line in enumerate(body.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{source}: malformed data line {lineno}: {line!r}")
        try:
            value = float(parts[0])
            p, q, r, s = (int(x) for x in parts[1:])
        except ValueError as exc:
            raise ValueError(f"{source}: malformed data line {lineno}: {line!r}") from exc
        for idx in (p, q, r, s):
            if idx < 0 or idx > norb:
                raise ValueError(
                    f"{source}: index {idx} out of range 1..{norb} on line {lineno}"
                )
        if p == q == r == s == 0:
            if seen_core and abs(value - ecore) > DUPLICATE_TOL:
                raise ValueError(f"{source}: conflicting core energy on line {lineno}")
            ecore = value
            seen_core = True
        elif r == 0 and s == 0:
            if p == 0 or q == 0:
                raise ValueError(f"{source}: malformed data line {lineno}: {line!r}")
            i, j = p - 1, q - 1
            if seen1[i, j] and abs(h1[i, j] - value) > DUPLICATE_TOL:
                raise ValueError(
                    f"{source}: conflicting one-electron entry ({p},{q}) on line {lineno}"
                )
            h1[i, j] = h1[j, i] = value
            seen1[i, j] = seen1[j, i] = True
        elif 0 in (p, q, r, s):
            raise ValueError(f"{source}: malformed data line {lineno}: {line!r}")
        else:
            i, j, k, l = p - 1, q - 1, r - 1, s - 1
            perms = (
                (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
            )
            if seen2[i, j, k, l] and abs(h2[i, j, k, l] - value) > DUPLICATE_TOL:
                raise ValueError(
                    f"{source}: conflicting two-electron entry ({p},{q},{r},{s}) "
                    f"on line {lineno}"
                )
            for perm in perms:
                h2[perm] = value
                seen2[perm] = True

    return Hamiltonian(norb=norb, nelec=(n_alpha, n_beta), h1=h1, h2=h2, ecore=ecore)


def write_fcidump(hamiltonian: Hamiltonian, path: str, tol: float = 0.0) -> None:
    """Write a Hamiltonian as an FCIDUMP file (one entry per symmetry class)."""
    norb = hamiltonian.norb
    n_alpha, n_beta = hamiltonian.nelec
    with open(path, "w") as handle:
        handle.write(
            f"&FCI NORB={norb},NELEC={n_alpha + n_beta},MS2={n_alpha - n_beta},\n&END\n"
        )
        for p in range(norb):
            for q in range(p + 1):
                for r in range(p + 1):
                    s_max = q if r == p else r
                    for s in range(s_max + 1):
                        value = hamiltonian.h2[p, q, r, s]
                        if abs(value) > tol:
                            handle.write(
                                f"{value:.16e} {p + 1} {q + 1} {r + 1} {s + 1}\n"
                            )
        for p in range(norb):
            for q in range(p + 1):
                value = hamiltonian.h1[p, q]
                if abs(value) > tol:
                    handle.write(f"{value:.16e} {p + 1} {q + 1} 0 0\n")
        handle.write(f"{hamiltonian.ecore:.16e} 0 0 0 0\n")


def write_amplitudes(amplitudes: Amplitudes, path: str) -> None:
    """Serialize amplitudes to the ``AMP v1`` container format.

    The format is one ASCII header line ``AMP v1 <nocc> <nvir>`` followed by
    the t1 then t2 entries, row-major, as little-endian 64-bit floats. Round
    trips are bit exact.
    """
    with open(path, "wb") as handle:
        handle.write(f"AMP v1 {amplitudes.nocc} {amplitudes.nvir}\n".encode("ascii"))
        handle.write(np.ascontiguousarray(amplitudes.t1, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(amplitudes.t2, dtype="<f8").tobytes())


def read_amplitudes(path: str) -> Amplitudes:
    """Read amplitudes from the ``AMP v1`` container format."""
    with open(path, "rb") as handle:
        header = handle.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "AMP" or header[1] != "v1":
            raise ValueError(f"not an AMP v1 file: header {header!r}")
        try:
            nocc, nvir = int(header[2]), int(header[3])
        except ValueError as exc:
            raise ValueError(f"malformed AMP v1 header: {header!r}") from exc
        payload = handle.read()
    n1 = nocc * nvir
    n2 = nocc * nocc * nvir * nvir
    if len(payload) != (n1 + n2) * 8:
        raise ValueError(f"AMP v1 payload has {len(payload)} bytes, expected {(n1 + n2) * 8}")
    t1 = np.frombuffer(payload[: n1 * 8], dtype="<f8").reshape(nocc, nvir)
    t2 = np.frombuffer(payload[n1 * 8 :], dtype="<f8").reshape(nocc, nocc, nvir, nvir)
    return Amplitudes(t1=t1.copy(), t2=t2.copy())


def write_bitstrings(samples: SampleSet, path: str) -> None:
    """Write sampled occupations as one bitstring per line.

    Each line has ``2 * norb`` characters: the spin-down (beta) half first,
    then the spin-up (alpha) half. Within each half the leftmost character is
    orbital ``norb - 1``, so each half reads as the binary rendering of the
    occupation bitmask.
    """
    norb = samples.norb
    with open(path, "w") as handle:
        for a, b in zip(samples.alpha.tolist(), samples.beta.tolist()):
            handle.write(format(b, f"0{norb}b") + format(a, f"0{norb}b") + "\n")


def read_bitstrings(path: str, norb: int | None = None) -> SampleSet:
    """Read bitstrings written by :func:`write_bitstrings`.

    No validity filtering happens here; every line becomes one draw. With
    ``norb`` omitted the orbital count is inferred from the first line
    (an empty file then gives an empty zero-orbital sample set).

    Raises:
        ValueError: If a line has the wrong length or non-binary characters.
    """
    alphas: list[int] = []
    betas: list[int] = []
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            if norb is None:
                if len(line) % 2:
                    raise ValueError(f"{path}: line {lineno} has odd length")
                norb = len(line) // 2
            if len(line) != 2 * norb or set(line) - {"0", "1"}:
                raise ValueError(
                    f"{path}: line {lineno} is not a {2 * norb}-character bitstring"
                )
            betas.append(int(line[:norb], 2))
            alphas.append(int(line[norb:], 2))
    return SampleSet(
        norb=norb if norb is not None else 0,
        alpha=np.array(alphas, dtype=np.int64),
        beta=np.array(betas, dtype=np.int64),
    )
