"""Compressed double factorization: refit few terms to the full t2 tensor.

Given a truncated factorization, the rotations are re-parameterized as
``U = exp(K)`` with ``K`` antihermitian and, together with the mask-allowed
coupling entries, optimized by L-BFGS against the least-squares
reconstruction loss

    loss = 1/2 * sum_ijab |t_bar[i,j,a,b] - t2[i,j,a,b]|^2
           + reg * | sum_mu ||J_mu||_F^2  -  ref_norm |

where ``t_bar`` is the (complex) reconstruction of the current parameters.
The least-squares part is differentiated by automatic differentiation (the
matrix exponential exactly); the norm penalty only touches coupling
coordinates and its kink is handled with an explicit subgradient.
"""

from __future__ import annotations

import dataclasses
import functools
import warnings

import numpy as np
import scipy.linalg

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402

from ucjkit import numopt  # noqa: E402
from ucjkit.dfcore import DoubleFactorization, double_factorize_t2, truncate  # noqa: E402

__all__ = [
    "CompressionConfig",
    "ConnectivityMask",
    "ParameterVector",
    "apply_mask",
    "compress",
    "loss",
    "loss_gradient",
    "mask_union",
    "multistage_compress",
    "pack_parameters",
    "reconstruction_loss",
    "unpack_parameters",
]

DESCENT_SLACK = 1e-12


def _normalize_pairs(pairs, norb: int) -> frozenset[tuple[int, int]]:
    out = set()
    for p, q in pairs:
        if not (0 <= p < norb and 0 <= q < norb):
            raise ValueError(f"orbital pair ({p}, {q}) out of range for norb={norb}")
        out.add((min(p, q), max(p, q)))
    return frozenset(out)


@dataclasses.dataclass(frozen=True)
class ConnectivityMask:
    """Allowed index pairs for the same-spin and opposite-spin couplings.

    Pairs are stored symmetrized as ``(min, max)`` tuples; an entry ``(p, q)``
    allows both ``J[p, q]`` and ``J[q, p]``.
    """

    norb: int
    aa_pairs: frozenset[tuple[int, int]]
    ab_pairs: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "aa_pairs", _normalize_pairs(self.aa_pairs, self.norb))
        object.__setattr__(self, "ab_pairs", _normalize_pairs(self.ab_pairs, self.norb))

    @classmethod
    def from_preset(cls, name: str, norb: int) -> "ConnectivityMask":
        """Build a named preset.

        ``square``: same-spin couplings between line neighbors ``(p, p+1)``,
        opposite-spin on-site couplings ``(p, p)``. ``heavy-hex``: same-spin
        line neighbors, opposite-spin on-site couplings on even orbitals
        only. ``all``: every pair in both sets.
        """
        line = {(p, p + 1) for p in range(norb - 1)}
        diag = {(p, p) for p in range(norb)}
        if name == "square":
            return cls(norb=norb, aa_pairs=frozenset(line), ab_pairs=frozenset(diag))
        if name == "heavy-hex":
            even_diag = {(p, p) for p in range(0, norb, 2)}
            return cls(norb=norb, aa_pairs=frozenset(line), ab_pairs=frozenset(even_diag))
        if name == "all":
            every = {(p, q) for p in range(norb) for q in range(p, norb)}
            return cls(norb=norb, aa_pairs=frozenset(every), ab_pairs=frozenset(every))
        raise ValueError(f"unknown mask preset {name!r}")

    def union_pairs(self) -> frozenset[tuple[int, int]]:
        """Union of the two allowed sets as ``(min, max)`` tuples."""
        return self.aa_pairs | self.ab_pairs

    def _matrix(self, pairs: frozenset[tuple[int, int]]) -> np.ndarray:
        allowed = np.zeros((self.norb, self.norb), dtype=bool)
        for p, q in pairs:
            allowed[p, q] = allowed[q, p] = True
        return allowed

    def aa_matrix(self) -> np.ndarray:
        return self._matrix(self.aa_pairs)

    def ab_matrix(self) -> np.ndarray:
        return self._matrix(self.ab_pairs)

    def union_matrix(self) -> np.ndarray:
        return self._matrix(self.union_pairs())

    def apply(self, coupling: np.ndarray, which: str = "union") -> np.ndarray:
        """Zero all entries of a coupling matrix outside the allowed set."""
        allowed = {"aa": self.aa_matrix, "ab": self.ab_matrix, "union": self.union_matrix}[
            which
        ]()
        return np.where(allowed, coupling, 0.0)


def mask_union(mask: ConnectivityMask) -> frozenset[tuple[int, int]]:
    """Transposition-closed union of a mask's two allowed pair sets.

    These are the coupling entries a compression run may make nonzero.
    """
    pairs = set()
    for p, q in mask.union_pairs():
        pairs.add((p, q))
        pairs.add((q, p))
    return frozenset(pairs)


def apply_mask(coupling: np.ndarray, allowed) -> np.ndarray:
    """Zero every entry of a symmetric matrix outside an allowed pair set.

    The pair set is symmetrized internally, so a symmetric input stays
    symmetric regardless of how the pairs are oriented.
    """
    coupling = np.asarray(coupling)
    keep = np.zeros(coupling.shape, dtype=bool)
    for p, q in allowed:
        keep[p, q] = keep[q, p] = True
    return np.where(keep, coupling, 0.0)


@dataclasses.dataclass(frozen=True)
class CompressionConfig:
    """Settings for (multistage) compressed double factorization.

    Attributes:
        reps: Target number of retained terms.
        regularization: Weight of the coupling-norm penalty; 0 disables it
            (sampling-oriented compression), 0.005 is the
            variational-estimation default.
        max_iter: L-BFGS iteration cap per stage.
        stage_step: Terms dropped between multistage stages.
        reference_norm: ``"full"`` anchors the penalty to the squared
            coupling norm of the complete untruncated factorization,
            ``"retained"`` to the starting factorization's own terms.
        grad_tol: Convergence threshold on the gradient infinity norm.
        f_tol: Convergence threshold on the relative objective decrease.
        seed: Recorded with the run for provenance; the L-BFGS path itself
            is deterministic.
    """

    reps: int
    regularization: float = 0.0
    max_iter: int = 100
    stage_step: int = 2
    reference_norm: str = "full"
    grad_tol: float = numopt.LBFGS_GRAD_TOL
    f_tol: float = numopt.LBFGS_F_TOL
    seed: int = 0

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps}")
        if self.regularization < 0:
            raise ValueError(
                f"regularization must be nonnegative, got {self.regularization}"
            )
        if self.stage_step < 1:
            raise ValueError(f"stage_step must be at least 1, got {self.stage_step}")
        if self.reference_norm not in ("full", "retained"):
            raise ValueError(
                f"reference_norm must be 'full' or 'retained', got {self.reference_norm!r}"
            )


def _allowed_upper_pairs(norb: int, mask: ConnectivityMask | None) -> tuple[tuple[int, int], ...]:
    if mask is None:
        return tuple((p, q) for p in range(norb) for q in range(p, norb))
    if mask.norb != norb:
        raise ValueError(f"mask is for norb={mask.norb}, factorization has norb={norb}")
    return tuple(sorted(mask.union_pairs()))


@dataclasses.dataclass(frozen=True)
class ParameterVector:
    """Flat optimization coordinates for a masked factorization.

    Per term, the vector concatenates the antihermitian rotation generator
    (real antisymmetric entries above the diagonal, then the imaginary
    diagonal and imaginary upper entries) followed by the allowed coupling
    entries in sorted ``(p, q)`` pair order, ``p <= q``. Masked coupling
    entries have no coordinate at all, so they are exactly zero in every
    unpacked factorization. Packing a factorization and unpacking the result
    is the identity on the allowed entries.
    """

    values: np.ndarray
    nterms: int
    norb: int
    nocc: int
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        expected = self.nterms * (self.norb * self.norb + len(self.pairs))
        if self.values.shape != (expected,):
            raise ValueError(
                f"parameter vector has shape {self.values.shape}, expected ({expected},)"
            )

    @property
    def dim(self) -> int:
        return self.values.size

    def with_values(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(
            values=np.asarray(values, dtype=float),
            nterms=self.nterms,
            norb=self.norb,
            nocc=self.nocc,
            pairs=self.pairs,
        )


@functools.lru_cache(maxsize=128)
def _compiled_kernels(nterms: int, norb: int, nocc: int, pairs: tuple[tuple[int, int], ...]):
    """Jitted (build, least-squares value, least-squares gradient) kernels."""
    triu_r, triu_c = np.triu_indices(norb, k=1)
    pair_r = jnp.array([p for p, _ in pairs], dtype=int)
    pair_c = jnp.array([q for _, q in pairs], dtype=int)
    npairs = len(pairs)
    n_asym = norb * (norb - 1) // 2
    n_sym = norb * (norb + 1) // 2

    def build_terms(x):
        x = x.reshape(nterms, n_asym + n_sym + npairs)
        xa = x[:, :n_asym]
        xs = x[:, n_asym : n_asym + n_sym]
        xj = x[:, n_asym + n_sym :]

        amat = jnp.zeros((nterms, norb, norb)).at[:, triu_r, triu_c].set(xa)
        amat = amat - jnp.transpose(amat, (0, 2, 1))
        smat = jnp.zeros((nterms, norb, norb)).at[:, triu_r, triu_c].set(xs[:, norb:])
        smat = smat + jnp.transpose(smat, (0, 2, 1))
        smat = smat.at[:, jnp.arange(norb), jnp.arange(norb)].set(xs[:, :norb])
        gen = jax.lax.complex(amat, smat)
        rotations = jax.vmap(jax.scipy.linalg.expm)(gen)

        couplings = jnp.zeros((nterms, norb, norb))
        if npairs:
            couplings = couplings.at[:, pair_r, pair_c].set(xj)
            couplings = couplings.at[:, pair_c, pair_r].set(xj)
        return rotations, couplings

    def lsq_fn(x, t2):
        rotations, couplings = build_terms(x)
        occ = rotations[:, :nocc, :]
        vir = rotations[:, nocc:, :]
        left = jnp.einsum("map,mip->mpai", vir, occ.conj())
        couplings = jax.lax.complex(couplings, jnp.zeros_like(couplings))
        recon = 1j * jnp.einsum("mpq,mpai,mqbj->ijab", couplings, left, left)
        resid = recon - t2
        return 0.5 * jnp.sum(jnp.abs(resid) ** 2)

    return jax.jit(build_terms), jax.jit(lsq_fn), jax.jit(jax.grad(lsq_fn))


def _coupling_slots(params: ParameterVector) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of the coupling coordinates and their norm weights.

    An off-diagonal pair carries weight 2 in the squared Frobenius norm
    (the entry appears at ``(p, q)`` and ``(q, p)``), a diagonal pair 1.
    """
    norb = params.norb
    npairs = len(params.pairs)
    per_term = norb * norb + npairs
    offsets = np.arange(params.nterms) * per_term + norb * norb
    slots = (offsets[:, None] + np.arange(npairs)[None, :]).ravel()
    weights = np.array([1.0 if p == q else 2.0 for p, q in params.pairs])
    return slots, np.tile(weights, params.nterms)


def _coupling_norm_sum(params: ParameterVector) -> float:
    slots, weights = _coupling_slots(params)
    vals = params.values[slots]
    return float(np.sum(weights * vals * vals))


def _check_finite(params: ParameterVector) -> None:
    if not np.all(np.isfinite(params.values)):
        raise ValueError("parameter vector contains non-finite entries")


def loss(
    params: ParameterVector,
    t2_target: np.ndarray,
    regularization: float = 0.0,
    ref_norm: float = 0.0,
) -> float:
    """Compression objective at a parameter vector.

    Half the squared Frobenius residual between the reconstruction and the
    target, plus ``regularization * |sum of squared coupling norms -
    ref_norm|``.
    """
    _check_finite(params)
    _, lsq, _ = _compiled_kernels(params.nterms, params.norb, params.nocc, params.pairs)
    value = float(lsq(jnp.asarray(params.values), jnp.asarray(t2_target, dtype=float)))
    if regularization:
        value += regularization * abs(_coupling_norm_sum(params) - ref_norm)
    return value


def loss_gradient(
    params: ParameterVector,
    t2_target: np.ndarray,
    regularization: float = 0.0,
    ref_norm: float = 0.0,
) -> ParameterVector:
    """Gradient of :func:`loss` with respect to the parameter vector.

    The penalty term is differentiated explicitly; exactly at its kink
    (coupling norm sum equal to ``ref_norm``) the subgradient 0 is used.
    """
    _check_finite(params)
    _, _, lsq_grad = _compiled_kernels(params.nterms, params.norb, params.nocc, params.pairs)
    grad = np.array(lsq_grad(jnp.asarray(params.values), jnp.asarray(t2_target, dtype=float)))
    if regularization:
        slots, weights = _coupling_slots(params)
        sign = np.sign(_coupling_norm_sum(params) - ref_norm)
        grad[slots] += regularization * sign * 2.0 * weights * params.values[slots]
    return params.with_values(grad)


def _principal_log_unitary(unitary: np.ndarray) -> np.ndarray:
    """Antihermitian principal logarithm of a unitary matrix."""
    tmat, qmat = scipy.linalg.schur(np.asarray(unitary, dtype=complex), output="complex")
    phases = np.angle(np.diag(tmat))
    gen = (qmat * (1j * phases)) @ qmat.conj().T
    return (gen - gen.conj().T) / 2


def pack_parameters(
    df: DoubleFactorization, mask: ConnectivityMask | None = None
) -> ParameterVector:
    """Parameter vector reproducing a factorization, mask applied to its J's."""
    pairs = _allowed_upper_pairs(df.norb, mask)
    triu_r, triu_c = np.triu_indices(df.norb, k=1)
    blocks = []
    for mu in range(df.nterms):
        gen = _principal_log_unitary(df.rotations[mu])
        coupling = df.couplings[mu]
        if mask is not None:
            coupling = mask.apply(coupling, "union")
        xa = gen.real[triu_r, triu_c]
        xs = np.concatenate([np.diag(gen.imag), gen.imag[triu_r, triu_c]])
        xj = np.array([coupling[p, q] for p, q in pairs])
        blocks.append(np.concatenate([xa, xs, xj]))
    values = np.concatenate(blocks) if blocks else np.zeros(0)
    return ParameterVector(
        values=values, nterms=df.nterms, norb=df.norb, nocc=df.nocc, pairs=pairs
    )


def unpack_parameters(params: ParameterVector) -> DoubleFactorization:
    """Factorization encoded by a parameter vector."""
    build, _, _ = _compiled_kernels(params.nterms, params.norb, params.nocc, params.pairs)
    rotations, couplings = build(jnp.asarray(params.values))
    return DoubleFactorization(
        norb=params.norb,
        nocc=params.nocc,
        rotations=np.asarray(rotations),
        couplings=np.asarray(couplings),
    )


def reconstruction_loss(df: DoubleFactorization, t2: np.ndarray) -> float:
    """Least-squares part of the loss (no penalty) for a factorization."""
    from ucjkit.dfcore import reconstruct_t2_complex

    resid = reconstruct_t2_complex(df) - np.asarray(t2)
    return float(0.5 * np.sum(np.abs(resid) ** 2))


def _reference_norm_value(
    t2: np.ndarray,
    df_init: DoubleFactorization,
    config: CompressionConfig,
    df_full: DoubleFactorization | None,
) -> float:
    if config.regularization == 0.0:
        return 0.0
    if config.reference_norm == "retained":
        return float(np.sum(df_init.couplings**2))
    if df_full is None:
        df_full = double_factorize_t2(np.asarray(t2, dtype=float))
    return float(np.sum(df_full.couplings**2))


def _optimize_terms(
    df_init: DoubleFactorization,
    t2: np.ndarray,
    config: CompressionConfig,
    mask: ConnectivityMask | None,
    df_full: DoubleFactorization | None,
    history: list[tuple[int, float, float]] | None,
) -> DoubleFactorization:
    ref_norm = _reference_norm_value(t2, df_init, config, df_full)
    params0 = pack_parameters(df_init, mask)
    t2 = np.asarray(t2, dtype=float)

    def fun(x: np.ndarray) -> float:
        return loss(params0.with_values(x), t2, config.regularization, ref_norm)

    def grad(x: np.ndarray) -> np.ndarray:
        return loss_gradient(params0.with_values(x), t2, config.regularization, ref_norm).values

    loss_initial = fun(params0.values)
    result = numopt.lbfgs_minimize(
        fun,
        grad,
        params0.values,
        max_iter=config.max_iter,
        grad_tol=config.grad_tol,
        f_tol=config.f_tol,
    )
    if result.fun <= loss_initial:
        best_x, loss_final = result.x, result.fun
    else:
        best_x, loss_final = params0.values, loss_initial
    if result.status == "line_search_failure":
        warnings.warn(
            f"compression optimizer stalled in its line search at loss {loss_final:.6e}; "
            "returning the best iterate",
            RuntimeWarning,
            stacklevel=3,
        )
    if history is not None:
        history.append((df_init.nterms, loss_initial, loss_final))
    return unpack_parameters(params0.with_values(best_x))


def compress(
    df_init: DoubleFactorization,
    t2_target: np.ndarray,
    config: CompressionConfig,
    mask: ConnectivityMask | None = None,
    df_full: DoubleFactorization | None = None,
    history: list[tuple[int, float, float]] | None = None,
) -> DoubleFactorization:
    """Optimize the terms of ``df_init`` against the full t2 tensor.

    The initial point is ``df_init`` itself with the mask applied, so the
    final loss never exceeds the masked starting loss (up to 1e-12): the
    optimizer's best accepted iterate is kept even when the line search
    stalls, in which case a ``RuntimeWarning`` is emitted.

    Args:
        df_init: Starting factorization with exactly ``config.reps`` terms.
        t2_target: Target tensor.
        config: Compression settings.
        mask: Connectivity restriction; ``None`` allows every coupling entry.
        df_full: Untruncated factorization anchoring the ``"full"`` penalty
            reference; computed from ``t2_target`` when needed and omitted.
        history: Optional list collecting ``(nterms, initial loss, final
            loss)`` per optimization stage.

    Returns:
        The optimized factorization; masked entries are exactly zero and the
        rotations are exactly unitary by construction.
    """
    if df_init.nterms != config.reps:
        raise ValueError(
            f"initial factorization has {df_init.nterms} terms, config asks for {config.reps}"
        )
    return _optimize_terms(df_init, t2_target, config, mask, df_full, history)


def _sorted_terms(df: DoubleFactorization) -> DoubleFactorization:
    norms = np.linalg.norm(df.couplings.reshape(df.nterms, -1), axis=1)
    order = np.argsort(-norms, kind="stable")
    return DoubleFactorization(
        norb=df.norb, nocc=df.nocc, rotations=df.rotations[order], couplings=df.couplings[order]
    )


def multistage_compress(
    df_full: DoubleFactorization,
    t2_target: np.ndarray,
    config: CompressionConfig,
    mask: ConnectivityMask | None = None,
    history: list[tuple[int, float, float]] | None = None,
) -> DoubleFactorization:
    """Compress by alternating re-optimization and truncation.

    The loop optimizes the current factorization, re-sorts its terms by
    coupling norm, drops the ``config.stage_step`` smallest, and repeats
    until ``config.reps`` terms remain. Starting already at ``config.reps``
    terms this is a single :func:`compress` stage.
    """
    if df_full.nterms < config.reps:
        raise ValueError(
            f"input factorization has {df_full.nterms} terms, fewer than the "
            f"target {config.reps}"
        )
    current = df_full
    while True:
        current = _optimize_terms(current, t2_target, config, mask, df_full, history)
        current = _sorted_terms(current)
        if current.nterms <= config.reps:
            return current
        current = truncate(current, max(config.reps, current.nterms - config.stage_step))
