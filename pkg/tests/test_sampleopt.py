"""Sampled-energy objective and its derivative-free optimization."""

from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.stats

from conftest import make_chain_hamiltonian
from ucjkit import detci, dfcore, numopt, qsci
from ucjkit.chemio import SampleSet
from ucjkit.compress import ConnectivityMask
from ucjkit.sampleopt import (
    AnsatzParameterization,
    SampleOptConfig,
    SampleOptResult,
    optimize_sample_energy,
    sample_energy_objective,
)
from ucjkit.ucjsim import UCJOperator, prepare_hartree_fock, prepare_ucj_state, ucj_from_df
from ucjkit.ucjsim import sample as ucjsim_sample


def haar_unitary(norb, seed):
    return scipy.stats.unitary_group.rvs(norb, random_state=np.random.default_rng(seed))


def random_operator(norb, n_reps, seed, mask=None, with_final=False):
    rng = np.random.default_rng(seed)
    rotations = np.stack([haar_unitary(norb, seed * 31 + mu) for mu in range(n_reps)])
    aa = rng.normal(size=(n_reps, norb, norb))
    ab = rng.normal(size=(n_reps, norb, norb))
    aa = (aa + np.transpose(aa, (0, 2, 1))) / 2
    ab = (ab + np.transpose(ab, (0, 2, 1))) / 2
    if mask is not None:
        aa = np.stack([mask.apply(j, "aa") for j in aa])
        ab = np.stack([mask.apply(j, "ab") for j in ab])
    final = haar_unitary(norb, seed * 31 + 7) if with_final else None
    return UCJOperator(
        rotations=rotations, couplings_aa=aa, couplings_ab=ab, final_rotation=final
    )


@pytest.mark.parametrize("mask_name,with_final", [(None, False), ("square", True)])
def test_pack_unpack_roundtrip(mask_name, with_final):
    norb = 4
    mask = None if mask_name is None else ConnectivityMask.from_preset(mask_name, norb)
    op = random_operator(norb, 2, 0, mask=mask, with_final=with_final)
    param = AnsatzParameterization.for_operator(op, mask)
    coords = param.pack(op)
    assert coords.shape == (param.dim,)
    rebuilt = param.unpack(coords)
    assert np.max(np.abs(rebuilt.rotations - op.rotations)) < 1e-10
    assert np.max(np.abs(rebuilt.couplings_aa - op.couplings_aa)) < 1e-12
    assert np.max(np.abs(rebuilt.couplings_ab - op.couplings_ab)) < 1e-12
    if with_final:
        assert np.max(np.abs(rebuilt.final_rotation - op.final_rotation)) < 1e-10
    else:
        assert rebuilt.final_rotation is None


def test_parameterization_dimension_counts():
    norb = 4
    free = AnsatzParameterization(norb=norb, n_reps=2, mask=None, has_final=False)
    n_pairs = norb * (norb + 1) // 2
    assert free.dim == 2 * (norb * norb + 2 * n_pairs)
    mask = ConnectivityMask.from_preset("heavy-hex", norb)
    masked = AnsatzParameterization(norb=norb, n_reps=2, mask=mask, has_final=True)
    assert masked.dim == 2 * (norb * norb + len(mask.aa_pairs) + len(mask.ab_pairs)) + norb * norb


def test_unpack_respects_mask_exactly():
    norb = 4
    mask = ConnectivityMask.from_preset("heavy-hex", norb)
    param = AnsatzParameterization(norb=norb, n_reps=2, mask=mask, has_final=False)
    rng = np.random.default_rng(1)
    op = param.unpack(rng.normal(size=param.dim))
    aa_allowed = mask.aa_matrix()
    ab_allowed = mask.ab_matrix()
    eye = np.eye(norb)
    for mu in range(2):
        assert np.max(np.abs(np.where(aa_allowed, 0.0, op.couplings_aa[mu]))) == 0.0
        assert np.max(np.abs(np.where(ab_allowed, 0.0, op.couplings_ab[mu]))) == 0.0
        assert np.max(np.abs(op.rotations[mu] @ op.rotations[mu].conj().T - eye)) < 1e-12


def test_pack_validates_operator_shape():
    op = random_operator(4, 2, 2)
    param = AnsatzParameterization(norb=4, n_reps=3, mask=None, has_final=False)
    with pytest.raises(ValueError):
        param.pack(op)
    with_final = AnsatzParameterization(norb=4, n_reps=2, mask=None, has_final=True)
    with pytest.raises(ValueError):
        with_final.pack(op)
    with pytest.raises(ValueError):
        param.unpack(np.zeros(3))


def test_config_validation():
    with pytest.raises(ValueError):
        SampleOptConfig(shots=0)
    with pytest.raises(ValueError):
        AnsatzParameterization(
            norb=4, n_reps=1, mask=ConnectivityMask.from_preset("square", 5), has_final=False
        )


def test_objective_accepts_operator_or_coordinates(chain422):
    reference = prepare_hartree_fock(4, (2, 2))
    op = random_operator(4, 1, 3)
    config = SampleOptConfig(shots=500, seed=4)
    direct = sample_energy_objective(op, chain422, reference, config)
    param = AnsatzParameterization.for_operator(op, None)
    via_coords = sample_energy_objective(
        param.pack(op), chain422, reference, config, parameterization=param
    )
    assert direct == via_coords
    with pytest.raises(ValueError):
        sample_energy_objective(param.pack(op), chain422, reference, config)


def test_objective_is_deterministic(chain422):
    reference = prepare_hartree_fock(4, (2, 2))
    op = random_operator(4, 1, 5)
    config = SampleOptConfig(shots=800, seed=6)
    values = {sample_energy_objective(op, chain422, reference, config) for _ in range(3)}
    assert len(values) == 1


def test_objective_bounded_by_sector_extremes(chain422):
    e_fci, _ = detci.fci_ground_state(chain422)
    reference = prepare_hartree_fock(4, (2, 2))
    config = SampleOptConfig(shots=400, seed=7)
    for seed in range(4):
        op = random_operator(4, 1, 10 + seed)
        value = sample_energy_objective(op, chain422, reference, config)
        assert value >= e_fci - 1e-9
        assert math.isfinite(value)


def test_objective_identity_circuit_gives_reference_energy(chain422):
    reference = prepare_hartree_fock(4, (2, 2))
    op = UCJOperator(
        rotations=np.stack([np.eye(4, dtype=complex)]),
        couplings_aa=np.zeros((1, 4, 4)),
        couplings_ab=np.zeros((1, 4, 4)),
    )
    value = sample_energy_objective(op, chain422, reference, SampleOptConfig(shots=50, seed=8))
    e_hf = detci.determinant_energy(chain422, detci.hartree_fock_determinant(4, (2, 2)))
    assert value == pytest.approx(e_hf, abs=1e-10)


def test_objective_composes_library_pieces(chain422):
    # Evaluating the objective equals running the subspace pipeline by hand
    # with the same seed.
    reference = prepare_hartree_fock(4, (2, 2))
    op = random_operator(4, 1, 9)
    config = SampleOptConfig(shots=700, seed=10)
    value = sample_energy_objective(op, chain422, reference, config)
    state = prepare_ucj_state(op, reference)
    draws = ucjsim_sample(state, config.shots, config.seed)
    valid = qsci.filter_valid(draws, (2, 2))
    basis = qsci.build_subspace(valid, 4, (2, 2))
    expected, _ = qsci.qsci_energy(basis, chain422, tol=config.davidson_tol)
    assert value == expected


def test_objective_empty_valid_set_warns(chain422, monkeypatch):
    # Exact simulation never loses draws to the sector filter; emulate a
    # lossy source (hardware readout) by emptying the filter output.
    reference = prepare_hartree_fock(4, (2, 2))
    op = random_operator(4, 1, 18)

    def lossy_filter(draws, nelec):
        return SampleSet(
            norb=draws.norb,
            alpha=draws.alpha[:0],
            beta=draws.beta[:0],
            seed=draws.seed,
            source_dim=draws.source_dim,
        )

    monkeypatch.setattr(qsci, "filter_valid", lossy_filter)
    with pytest.warns(RuntimeWarning):
        value = sample_energy_objective(
            op, chain422, reference, SampleOptConfig(shots=20, seed=9)
        )
    assert value == math.inf


def test_optimize_zero_budget_returns_initial(chain422):
    reference = prepare_hartree_fock(4, (2, 2))
    op = random_operator(4, 1, 11)
    config = SampleOptConfig(
        shots=100,
        seed=12,
        optimizer=numopt.PatternSearchConfig(total_budget=0),
    )
    result = optimize_sample_energy(op, chain422, reference, config)
    assert isinstance(result, SampleOptResult)
    assert result.trace == ()
    assert math.isnan(result.energy)
    assert np.array_equal(result.operator.rotations, op.rotations)
    assert np.array_equal(result.operator.couplings_aa, op.couplings_aa)


def test_optimize_never_worsens_objective(chain422):
    reference = prepare_hartree_fock(4, (2, 2))
    t2 = 0.05 * np.ones((2, 2, 2, 2))
    df = dfcore.truncate(dfcore.double_factorize_t2(t2), 2)
    op = ucj_from_df(df)
    config = SampleOptConfig(
        shots=600,
        seed=13,
        optimizer=numopt.PatternSearchConfig(
            total_budget=60, subproblem_size=8, subproblem_budget=10, seed=13
        ),
    )
    initial = sample_energy_objective(op, chain422, reference, config)
    result = optimize_sample_energy(op, chain422, reference, config)
    assert result.energy <= initial + 1e-12
    assert result.trace[0][1] == pytest.approx(initial, abs=1e-12)
    final = sample_energy_objective(result.operator, chain422, reference, config)
    assert final == pytest.approx(result.energy, abs=1e-12)


def test_optimize_trace_and_determinism(chain422):
    reference = prepare_hartree_fock(4, (2, 2))
    op = random_operator(4, 1, 14)
    config = SampleOptConfig(
        shots=300,
        seed=15,
        optimizer=numopt.PatternSearchConfig(
            total_budget=30, subproblem_size=5, subproblem_budget=6, seed=15
        ),
    )
    first = optimize_sample_energy(op, chain422, reference, config)
    second = optimize_sample_energy(op, chain422, reference, config)
    assert len(first.trace) <= 30
    assert first.energy == second.energy
    for (xa, fa), (xb, fb) in zip(first.trace, second.trace):
        assert np.array_equal(xa, xb)
        assert fa == fb


def test_optimize_respects_mask(chain422):
    reference = prepare_hartree_fock(4, (2, 2))
    mask = ConnectivityMask.from_preset("square", 4)
    op = random_operator(4, 1, 16, mask=mask)
    config = SampleOptConfig(
        shots=200,
        seed=17,
        mask=mask,
        optimizer=numopt.PatternSearchConfig(
            total_budget=25, subproblem_size=6, subproblem_budget=5, seed=17
        ),
    )
    result = optimize_sample_energy(op, chain422, reference, config)
    aa_allowed = mask.aa_matrix()
    ab_allowed = mask.ab_matrix()
    for mu in range(result.operator.n_reps):
        assert np.max(np.abs(np.where(aa_allowed, 0.0, result.operator.couplings_aa[mu]))) == 0.0
        assert np.max(np.abs(np.where(ab_allowed, 0.0, result.operator.couplings_ab[mu]))) == 0.0
