"""Command-line entry points, configuration handling, and exit codes."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import make_chain_hamiltonian
from ucjkit import chemio, cli, detci, dfcore, qsci, ucjsim
from ucjkit.chemio import Amplitudes, SampleSet


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """FCIDUMP and amplitude fixtures shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    hamiltonian = make_chain_hamiltonian(4, (2, 2), repulsion=2.0)
    fcidump = root / "chain.fcidump"
    chemio.write_fcidump(hamiltonian, str(fcidump))
    _, coefficients = detci.cisd_ground_state(hamiltonian)
    amplitudes = detci.cisd_to_t_amplitudes(coefficients)
    amp_path = root / "chain.amp"
    chemio.write_amplitudes(amplitudes, str(amp_path))
    zero_path = root / "zero.amp"
    chemio.write_amplitudes(
        Amplitudes(t1=np.zeros((2, 2)), t2=np.zeros((2, 2, 2, 2))), str(zero_path)
    )
    return {
        "root": root,
        "hamiltonian": hamiltonian,
        "fcidump": str(fcidump),
        "amplitudes": str(amp_path),
        "zero_amplitudes": str(zero_path),
        "t2": amplitudes.t2,
    }


def run_cli(args):
    return cli.main(args)


def read_report(directory, name):
    path = directory / f"report_{name}.txt"
    assert path.exists()
    lines = path.read_text().splitlines()
    assert lines[0].startswith("config ")
    return lines


def report_value(lines, key):
    for line in lines:
        parts = line.split()
        if parts and parts[0] == key:
            return parts[1]
    raise AssertionError(f"no {key!r} line in report: {lines}")


def test_load_config_defaults():
    config = cli.load_config(None, {})
    assert config.method == "compressed"
    assert config.reps == 1
    assert config.multistage is True
    assert config.effective_regularization() == 0.0


def test_effective_regularization_per_method():
    base = cli.load_config(None, {"method": "compressed+reg"})
    assert base.effective_regularization() == 0.005
    explicit = cli.load_config(
        None, {"method": "compressed+reg", "regularization": 0.25}
    )
    assert explicit.effective_regularization() == 0.25
    sampling = cli.load_config(None, {"method": "sample-opt"})
    assert sampling.effective_regularization() == 0.0


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[paths]\nfcidump = input.fcidump\n"
        "[method]\nmethod = truncated\nreps = 3\nmultistage = off\n"
        "[sampling]\nseed = 7\ndavidson_tol = 1e-6\n"
        "[optimizer]\nbudget = 42\n"
    )
    config = cli.load_config(str(path), {"reps": 5})
    assert config.fcidump == "input.fcidump"
    assert config.method == "truncated"
    assert config.reps == 5  # flag override wins
    assert config.multistage is False
    assert config.seed == 7
    assert config.davidson_tol == 1e-6
    assert config.budget == 42


def test_load_config_rejects_unknown_entries(tmp_path):
    bad_section = tmp_path / "a.ini"
    bad_section.write_text("[circuits]\nreps = 2\n")
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(bad_section), {})
    bad_key = tmp_path / "b.ini"
    bad_key.write_text("[method]\nrepz = 2\n")
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(bad_key), {})
    bad_bool = tmp_path / "c.ini"
    bad_bool.write_text("[method]\nmultistage = maybe\n")
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(bad_bool), {})
    bad_int = tmp_path / "d.ini"
    bad_int.write_text("[method]\nreps = three\n")
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(bad_int), {})
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, {"method": "interpolated"})
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, {"mask": "ladder"})
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(tmp_path / "missing.ini"), {})


def test_config_hash_tracks_settings():
    first = cli.load_config(None, {})
    second = cli.load_config(None, {})
    assert first.config_hash() == second.config_hash()
    changed = cli.load_config(None, {"seed": 1})
    assert changed.config_hash() != first.config_hash()
    assert len(first.config_hash()) == 12


def test_unknown_subcommand_exits_via_argparse():
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["transmogrify"])
    assert excinfo.value.code == 2


def test_fci_command(workdir, tmp_path):
    code = run_cli(["fci", "--fcidump", workdir["fcidump"], "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "fci")
    e_fci, _ = detci.fci_ground_state(workdir["hamiltonian"])
    assert float(report_value(lines, "fci_energy")) == pytest.approx(e_fci, abs=1e-9)
    ref = detci.hartree_fock_determinant(4, (2, 2))
    e_hf = detci.determinant_energy(workdir["hamiltonian"], ref)
    assert float(report_value(lines, "hf_energy")) == pytest.approx(e_hf, abs=1e-9)


def test_fci_reports_are_reproducible(workdir, tmp_path):
    args = ["fci", "--fcidump", workdir["fcidump"], "--out", str(tmp_path)]
    run_cli(args)
    first = (tmp_path / "report_fci.txt").read_text()
    run_cli(args)
    second = (tmp_path / "report_fci.txt").read_text()
    assert first == second


def test_fci_missing_input_exits_config(tmp_path):
    assert run_cli(["fci", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert (
        run_cli(["fci", "--fcidump", str(tmp_path / "absent.fcidump"), "--out", str(tmp_path)])
        == cli.EXIT_CONFIG
    )


def test_cisd_amps_command(workdir, tmp_path):
    out_amp = tmp_path / "written.amp"
    code = run_cli([
        "cisd-amps",
        "--fcidump", workdir["fcidump"],
        "--amplitudes", str(out_amp),
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "cisd_amps")
    written = chemio.read_amplitudes(str(out_amp))
    assert np.max(np.abs(written.t2 - workdir["t2"])) < 1e-12
    e_cisd, _ = detci.cisd_ground_state(workdir["hamiltonian"])
    assert float(report_value(lines, "cisd_energy")) == pytest.approx(e_cisd, abs=1e-9)


def test_factorize_command(workdir, tmp_path):
    code = run_cli([
        "factorize",
        "--amplitudes", workdir["amplitudes"],
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "factorize")
    df = dfcore.read_df_file(str(tmp_path / "factorization.df"))
    assert df.nterms == int(report_value(lines, "nterms"))
    assert df.nterms <= 2 * 2 * 2
    t2 = workdir["t2"]
    assert np.linalg.norm(dfcore.reconstruct_t2(df) - t2) <= 1e-10 * max(
        1.0, np.linalg.norm(t2)
    )
    assert float(report_value(lines, "reconstruction_error")) < 1e-10


def test_factorize_zero_amplitudes(workdir, tmp_path):
    code = run_cli([
        "factorize",
        "--amplitudes", workdir["zero_amplitudes"],
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "factorize")
    assert report_value(lines, "nterms") == "0"
    df = dfcore.read_df_file(str(tmp_path / "factorization.df"))
    assert df.nterms == 0


def test_compress_command_multistage(workdir, tmp_path):
    code = run_cli([
        "compress",
        "--amplitudes", workdir["amplitudes"],
        "--reps", "2",
        "--stage-step", "2",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "compress")
    assert report_value(lines, "reps") == "2"
    df = dfcore.read_df_file(str(tmp_path / "compressed.df"))
    assert df.nterms == 2
    loss_truncated = float(report_value(lines, "loss_truncated"))
    loss_compressed = float(report_value(lines, "loss_compressed"))
    assert loss_compressed <= loss_truncated + 1e-12
    trace = (tmp_path / "compress_trace.txt").read_text().splitlines()
    assert trace[0] == "stage nterms loss_initial loss_final"
    assert len(trace) - 1 == int(report_value(lines, "stages"))
    for row in trace[1:]:
        stage, nterms, first, last = row.split()
        assert float(last) <= float(first) + 1e-12


def test_compress_command_regularized_single_stage(workdir, tmp_path):
    code = run_cli([
        "compress",
        "--amplitudes", workdir["amplitudes"],
        "--method", "compressed+reg",
        "--reps", "2",
        "--single-stage",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "compress")
    assert report_value(lines, "regularization") == "0.005"
    assert report_value(lines, "stages") == "1"
    assert any(line.startswith("loss_final_regularized ") for line in lines)
    trace = (tmp_path / "compress_trace.txt").read_text().splitlines()
    assert trace[0] == "stage nterms loss_initial loss_final_regularized"


def test_compress_full_rank_reaches_exactness(workdir, tmp_path):
    code = run_cli([
        "compress",
        "--amplitudes", workdir["amplitudes"],
        "--reps", "99",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "compress")
    t2 = workdir["t2"]
    loss_compressed = float(report_value(lines, "loss_compressed"))
    residual = np.sqrt(2.0 * loss_compressed)
    assert residual <= 1e-10 * max(1.0, np.linalg.norm(t2))


def test_energy_command_truncated_identity(workdir, tmp_path):
    # Zero amplitudes with the truncated method build an identity circuit,
    # so every energy in the report collapses onto the reference energy.
    code = run_cli([
        "energy",
        "--fcidump", workdir["fcidump"],
        "--amplitudes", workdir["zero_amplitudes"],
        "--method", "truncated",
        "--total-samples", "200",
        "--batches", "2",
        "--batch-size", "50",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "energy")
    ref = detci.hartree_fock_determinant(4, (2, 2))
    e_hf = detci.determinant_energy(workdir["hamiltonian"], ref)
    assert float(report_value(lines, "vqe_energy")) == pytest.approx(e_hf, abs=1e-9)
    assert float(report_value(lines, "entropy")) == pytest.approx(0.0, abs=1e-12)
    for line in lines:
        if line.startswith("batch ") and "energy" in line:
            assert float(line.split()[-1]) == pytest.approx(e_hf, abs=1e-9)


def test_energy_command_compressed(workdir, tmp_path):
    code = run_cli([
        "energy",
        "--fcidump", workdir["fcidump"],
        "--amplitudes", workdir["amplitudes"],
        "--method", "compressed",
        "--reps", "2",
        "--total-samples", "300",
        "--batches", "3",
        "--batch-size", "80",
        "--seed", "3",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "energy")
    e_fci = float(report_value(lines, "fci_energy"))
    e_hf = float(report_value(lines, "hf_energy"))
    e_vqe = float(report_value(lines, "vqe_energy"))
    assert e_fci <= e_vqe + 1e-9
    assert any(line.startswith("method compressed reps 2") for line in lines)
    assert any(line.startswith("summary ") for line in lines)
    # QSCI energies are variational too.
    for line in lines:
        if line.startswith("batch ") and "energy" in line:
            assert float(line.split()[-1]) >= e_fci - 1e-9


def test_energy_command_from_ucj_file(workdir, tmp_path):
    ucj_path = tmp_path / "params.ucj"
    operator = cli.random_ucj_operator(
        norb=4,
        reps=1,
        mask=cli.compress.ConnectivityMask.from_preset("all", 4),
        seed=5,
    )
    ucjsim.write_ucj_file(operator, str(ucj_path))
    code = run_cli([
        "energy",
        "--fcidump", workdir["fcidump"],
        "--ucj", str(ucj_path),
        "--total-samples", "200",
        "--batches", "2",
        "--batch-size", "50",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "energy")
    assert any(line == f"parameters {ucj_path}" for line in lines)


def test_energy_norb_mismatch_exits_config(workdir, tmp_path):
    ucj_path = tmp_path / "wrong.ucj"
    operator = cli.random_ucj_operator(
        norb=5,
        reps=1,
        mask=cli.compress.ConnectivityMask.from_preset("all", 5),
        seed=6,
    )
    ucjsim.write_ucj_file(operator, str(ucj_path))
    code = run_cli([
        "energy",
        "--fcidump", workdir["fcidump"],
        "--ucj", str(ucj_path),
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_CONFIG


def test_energy_requires_parameters_or_amplitudes(workdir, tmp_path):
    code = run_cli([
        "energy",
        "--fcidump", workdir["fcidump"],
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_CONFIG


def test_random_params_command(workdir, tmp_path):
    code = run_cli([
        "random-params",
        "--norb", "4",
        "--reps", "2",
        "--mask", "square",
        "--seed", "11",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    operator = ucjsim.read_ucj_file(str(tmp_path / "random.ucj"))
    assert operator.n_reps == 2
    assert operator.final_rotation is not None
    eye = np.eye(4)
    for rot in operator.rotations:
        assert np.max(np.abs(rot @ rot.conj().T - eye)) < 1e-10
    mask = cli.compress.ConnectivityMask.from_preset("square", 4)
    aa_allowed = mask.aa_matrix()
    for mu in range(2):
        coupling = operator.couplings_aa[mu]
        assert np.max(np.abs(np.where(aa_allowed, 0.0, coupling))) == 0.0
        assert np.max(np.abs(coupling)) <= np.pi


def test_random_params_seeded_reproducibility(tmp_path):
    first_dir = tmp_path / "one"
    second_dir = tmp_path / "two"
    for out in (first_dir, second_dir):
        assert run_cli([
            "random-params", "--norb", "3", "--seed", "12", "--out", str(out)
        ]) == cli.EXIT_OK
    first = ucjsim.read_ucj_file(str(first_dir / "random.ucj"))
    second = ucjsim.read_ucj_file(str(second_dir / "random.ucj"))
    assert np.array_equal(first.rotations, second.rotations)
    assert np.array_equal(first.couplings_aa, second.couplings_aa)
    assert np.array_equal(first.final_rotation, second.final_rotation)


def test_random_params_no_final_rotation(tmp_path):
    code = run_cli([
        "random-params",
        "--norb", "3",
        "--no-final-rotation",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    operator = ucjsim.read_ucj_file(str(tmp_path / "random.ucj"))
    assert operator.final_rotation is None


def test_random_params_requires_norb(tmp_path):
    assert run_cli(["random-params", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_sample_opt_command(workdir, tmp_path):
    code = run_cli([
        "sample-opt",
        "--fcidump", workdir["fcidump"],
        "--amplitudes", workdir["amplitudes"],
        "--reps", "1",
        "--shots", "300",
        "--budget", "20",
        "--subproblem-size", "5",
        "--subproblem-budget", "5",
        "--seed", "13",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "sample_opt")
    evaluations = int(report_value(lines, "evaluations"))
    assert 0 < evaluations <= 20
    initial = float(report_value(lines, "objective_initial"))
    final = float(report_value(lines, "objective_final"))
    assert final <= initial + 1e-12
    trace = (tmp_path / "sample_opt_trace.txt").read_text().splitlines()
    assert trace[0] == "evaluation objective incumbent"
    assert len(trace) - 1 == evaluations
    best = np.inf
    for row in trace[1:]:
        _, value, flag = row.split()
        improved = float(value) < best
        assert int(flag) == int(improved)
        best = min(best, float(value))
    optimized = ucjsim.read_ucj_file(str(tmp_path / "optimized.ucj"))
    assert optimized.norb == 4


def test_qsci_file_command_full_sector(workdir, tmp_path):
    basis = detci.full_sector_basis(4, (2, 2))
    pool = SampleSet(
        norb=4,
        alpha=np.array([d[0] for d in basis.determinants], dtype=np.int64),
        beta=np.array([d[1] for d in basis.determinants], dtype=np.int64),
    )
    bit_path = tmp_path / "draws.txt"
    chemio.write_bitstrings(pool, str(bit_path))
    code = run_cli([
        "qsci-file",
        "--fcidump", workdir["fcidump"],
        "--bitstrings", str(bit_path),
        "--total-samples", "36",
        "--batches", "2",
        "--batch-size", "36",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "qsci_file")
    assert report_value(lines, "draws") == "36"
    assert report_value(lines, "valid") == "36"
    assert float(report_value(lines, "valid_fraction")) == 1.0
    e_fci, _ = detci.fci_ground_state(workdir["hamiltonian"])
    for line in lines:
        if line.startswith("batch ") and "energy" in line:
            assert float(line.split()[-1]) == pytest.approx(e_fci, abs=2e-8)


def test_qsci_file_counts_invalid_draws(workdir, tmp_path):
    pool = SampleSet(
        norb=4,
        alpha=np.array([0b0011, 0b0111], dtype=np.int64),
        beta=np.array([0b0011, 0b0011], dtype=np.int64),
    )
    bit_path = tmp_path / "draws.txt"
    chemio.write_bitstrings(pool, str(bit_path))
    code = run_cli([
        "qsci-file",
        "--fcidump", workdir["fcidump"],
        "--bitstrings", str(bit_path),
        "--total-samples", "2",
        "--batches", "1",
        "--batch-size", "2",
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_OK
    lines = read_report(tmp_path, "qsci_file")
    assert report_value(lines, "valid_fraction") == "0.500000"


def test_qsci_file_all_invalid_exits_numerical(workdir, tmp_path):
    bit_path = tmp_path / "draws.txt"
    bit_path.write_text("00010111\n00010111\n")  # (3, 1) sector lines
    code = run_cli([
        "qsci-file",
        "--fcidump", workdir["fcidump"],
        "--bitstrings", str(bit_path),
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_NUMERICAL
    lines = read_report(tmp_path, "qsci_file")
    assert report_value(lines, "valid") == "0"
    assert any(line.startswith("error ") for line in lines)


def test_qsci_file_malformed_bitstrings_exit_config(workdir, tmp_path):
    bit_path = tmp_path / "draws.txt"
    bit_path.write_text("0011\n")  # wrong length for norb=4
    code = run_cli([
        "qsci-file",
        "--fcidump", workdir["fcidump"],
        "--bitstrings", str(bit_path),
        "--out", str(tmp_path),
    ])
    assert code == cli.EXIT_CONFIG


def test_config_file_drives_a_run(workdir, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(
        f"[paths]\nfcidump = {workdir['fcidump']}\noutput_dir = {tmp_path}\n"
    )
    assert run_cli(["fci", "--config", str(ini)]) == cli.EXIT_OK
    assert (tmp_path / "report_fci.txt").exists()
