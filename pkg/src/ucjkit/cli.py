"""Command-line pipeline around the library.

Configuration comes from a flat ``key = value`` file with section headers
(INI syntax); any command-line flag overrides the file. Exit codes: 0 on
success, 2 for configuration/input errors, 3 for numerical failures, 4 for
convergence failures. Reports carry a hash of the effective configuration so
runs can be told apart. The ``UCJKIT_NUM_THREADS`` environment variable caps
worker threads for batched subspace solves.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import math
import os
import sys

import numpy as np
import scipy.stats

from ucjkit import chemio, compress, detci, dfcore, numopt, qsci, sampleopt, ucjsim

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CONVERGENCE = 4

METHODS = ("truncated", "compressed", "compressed+reg", "sample-opt")


class ConfigError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    """Effective settings of one CLI invocation."""

    fcidump: str | None = None
    amplitudes: str | None = None
    ucj: str | None = None
    bitstrings: str | None = None
    output_dir: str = "."
    norb: int | None = None

    method: str = "compressed"
    reps: int = 1
    regularization: float | None = None
    mask: str = "all"
    multistage: bool = True
    stage_step: int = 2
    start_reps: int | None = None
    max_iter: int = 100
    reference_norm: str = "full"

    seed: int = 0
    total_samples: int = 100_000
    batches: int = 10
    batch_size: int = 4000
    shots: int = 10_000
    davidson_tol: float = detci.DAVIDSON_TOL

    budget: int = 500
    subproblem_size: int = 20
    subproblem_budget: int = 20
    initial_mesh: float = 0.1
    with_final_rotation: bool = True

    def config_hash(self) -> str:
        payload = "\n".join(
            f"{field.name}={getattr(self, field.name)}" for field in dataclasses.fields(self)
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def effective_regularization(self) -> float:
        if self.regularization is not None:
            return self.regularization
        return 0.005 if self.method == "compressed+reg" else 0.0


_SECTION_FIELDS = {
    "paths": ("fcidump", "amplitudes", "ucj", "bitstrings", "output_dir"),
    "method": (
        "method",
        "reps",
        "regularization",
        "mask",
        "multistage",
        "stage_step",
        "start_reps",
        "max_iter",
        "reference_norm",
        "norb",
        "with_final_rotation",
    ),
    "sampling": ("seed", "total_samples", "batches", "batch_size", "shots", "davidson_tol"),
    "optimizer": ("budget", "subproblem_size", "subproblem_budget", "initial_mesh"),
}

_BOOL_FIELDS = {"multistage", "with_final_rotation"}
_INT_FIELDS = {
    "reps", "stage_step", "start_reps", "max_iter", "seed", "total_samples",
    "batches", "batch_size", "shots", "budget", "subproblem_size",
    "subproblem_budget", "norb",
}
_FLOAT_FIELDS = {"regularization", "initial_mesh", "davidson_tol"}


def _coerce(field: str, raw: str):
    raw = raw.strip()
    if field in _BOOL_FIELDS:
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"cannot read boolean value {raw!r} for {field}")
    try:
        if field in _INT_FIELDS:
            return int(raw)
        if field in _FLOAT_FIELDS:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot read numeric value {raw!r} for {field}") from exc
    return raw


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Build the effective configuration from a file plus flag overrides."""
    config = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as handle:
                parser.read_file(handle)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for section in parser.sections():
            if section not in _SECTION_FIELDS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SECTION_FIELDS[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                setattr(config, key, _coerce(key, raw))
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if config.method not in METHODS:
        raise ConfigError(f"unknown method {config.method!r}")
    if config.mask not in ("square", "heavy-hex", "all"):
        raise ConfigError(f"unknown mask preset {config.mask!r}")
    return config


def _report(config: RunConfig, name: str, lines: list[str]) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, f"report_{name}.txt")
    body = [f"config {config.config_hash()}"] + lines
    with open(path, "w") as handle:
        handle.write("\n".join(body) + "\n")
    for line in body:
        print(line)
    return path


def _hartree(value: float) -> str:
    return f"{value:.10f}"


def _require(config: RunConfig, *fields: str) -> None:
    for field in fields:
        if getattr(config, field) is None:
            raise ConfigError(f"this command requires {field!r} (config or flag)")


def _load_hamiltonian(config: RunConfig) -> chemio.Hamiltonian:
    _require(config, "fcidump")
    return chemio.read_fcidump(config.fcidump)


def _mask_for(config: RunConfig, norb: int) -> compress.ConnectivityMask:
    return compress.ConnectivityMask.from_preset(config.mask, norb)


def _compression_config(config: RunConfig, reps: int) -> compress.CompressionConfig:
    return compress.CompressionConfig(
        reps=reps,
        regularization=config.effective_regularization(),
        max_iter=config.max_iter,
        stage_step=config.stage_step,
        reference_norm=config.reference_norm,
        seed=config.seed,
    )


def _compressed_factorization(
    config: RunConfig, amplitudes: chemio.Amplitudes
) -> tuple[dfcore.DoubleFactorization, list[tuple[int, float, float]]]:
    """Run the configured compression; returns the result and stage history."""
    df_full = dfcore.double_factorize_t2(amplitudes.t2)
    reps = min(config.reps, df_full.nterms)
    ccfg = _compression_config(config, reps)
    mask = _mask_for(config, amplitudes.nocc + amplitudes.nvir)
    history: list[tuple[int, float, float]] = []
    if config.multistage:
        start = df_full.nterms if config.start_reps is None else config.start_reps
        start = max(reps, min(start, df_full.nterms))
        df = compress.multistage_compress(
            dfcore.truncate(df_full, start), amplitudes.t2, ccfg, mask, history=history
        )
    else:
        df = compress.compress(
            dfcore.truncate(df_full, reps), amplitudes.t2, ccfg, mask,
            df_full=df_full, history=history,
        )
    return df, history


def _operator_from_config(
    config: RunConfig, amplitudes: chemio.Amplitudes | None
) -> tuple[ucjsim.UCJOperator, list[str]]:
    """Build (or load) the circuit parameters selected by the config.

    The ``sample-opt`` method starts from the compressed factorization; the
    sampled-energy optimization itself runs in the commands that need it.
    """
    if config.ucj is not None:
        return ucjsim.read_ucj_file(config.ucj), [f"parameters {config.ucj}"]
    if amplitudes is None:
        raise ConfigError("either 'ucj' or 'amplitudes' must be provided")
    norb = amplitudes.nocc + amplitudes.nvir
    mask = _mask_for(config, norb)
    notes: list[str] = []
    if config.method == "truncated":
        df_full = dfcore.double_factorize_t2(amplitudes.t2)
        df = dfcore.truncate(df_full, min(config.reps, df_full.nterms))
        notes.append(f"method truncated reps {df.nterms}")
    else:
        df, history = _compressed_factorization(config, amplitudes)
        first = history[0][1] if history else math.nan
        last = history[-1][2] if history else math.nan
        notes.append(
            f"method {config.method} reps {df.nterms} stages {len(history)} "
            f"loss {first:.6e} -> {last:.6e}"
        )
    operator = ucjsim.ucj_from_df(df, t1=amplitudes.t1, mask=mask)
    return operator, notes


def _qsci_config(config: RunConfig) -> qsci.QsciConfig:
    return qsci.QsciConfig(
        total_samples=config.total_samples,
        batches=config.batches,
        batch_size=config.batch_size,
        seed=config.seed,
        davidson_tol=config.davidson_tol,
    )


def _sample_opt_config(config: RunConfig, norb: int) -> sampleopt.SampleOptConfig:
    return sampleopt.SampleOptConfig(
        shots=config.shots,
        optimizer=numopt.PatternSearchConfig(
            total_budget=config.budget,
            subproblem_size=config.subproblem_size,
            subproblem_budget=config.subproblem_budget,
            initial_mesh=config.initial_mesh,
            seed=config.seed,
        ),
        mask=_mask_for(config, norb),
        seed=config.seed,
        davidson_tol=config.davidson_tol,
    )


def cmd_fci(config: RunConfig) -> int:
    hamiltonian = _load_hamiltonian(config)
    ref = detci.hartree_fock_determinant(hamiltonian.norb, hamiltonian.nelec)
    e_hf = detci.determinant_energy(hamiltonian, ref)
    e_fci, _ = detci.fci_ground_state(hamiltonian)
    _report(config, "fci", [
        f"norb {hamiltonian.norb} nelec {hamiltonian.nelec}",
        f"hf_energy {_hartree(e_hf)}",
        f"fci_energy {_hartree(e_fci)}",
        f"correlation {e_fci - e_hf:.3e}",
    ])
    return EXIT_OK


def cmd_cisd_amps(config: RunConfig) -> int:
    hamiltonian = _load_hamiltonian(config)
    e_cisd, coefficients = detci.cisd_ground_state(hamiltonian)
    amplitudes = detci.cisd_to_t_amplitudes(coefficients)
    os.makedirs(config.output_dir, exist_ok=True)
    out = config.amplitudes or os.path.join(config.output_dir, "amplitudes.amp")
    chemio.write_amplitudes(amplitudes, out)
    ref = detci.hartree_fock_determinant(hamiltonian.norb, hamiltonian.nelec)
    e_hf = detci.determinant_energy(hamiltonian, ref)
    _report(config, "cisd_amps", [
        f"hf_energy {_hartree(e_hf)}",
        f"cisd_energy {_hartree(e_cisd)}",
        f"reference_weight {coefficients.c0:.6f}",
        f"t1_norm {np.linalg.norm(amplitudes.t1):.6e}",
        f"t2_norm {np.linalg.norm(amplitudes.t2):.6e}",
        f"amplitudes {out}",
    ])
    return EXIT_OK


def cmd_factorize(config: RunConfig) -> int:
    _require(config, "amplitudes")
    amplitudes = chemio.read_amplitudes(config.amplitudes)
    df = dfcore.double_factorize_t2(amplitudes.t2)
    error = dfcore.truncation_error(df, amplitudes.t2, df.nterms)
    os.makedirs(config.output_dir, exist_ok=True)
    out = os.path.join(config.output_dir, "factorization.df")
    dfcore.write_df_file(df, out)
    norms = np.linalg.norm(df.couplings.reshape(df.nterms, df.norb * df.norb), axis=1)
    _report(config, "factorize", [
        f"nterms {df.nterms}",
        f"reconstruction_error {error:.3e}",
        "coupling_norms " + " ".join(f"{x:.6e}" for x in norms),
        f"factorization {out}",
    ])
    return EXIT_OK


def cmd_compress(config: RunConfig) -> int:
    _require(config, "amplitudes")
    amplitudes = chemio.read_amplitudes(config.amplitudes)
    df, history = _compressed_factorization(config, amplitudes)
    df_full = dfcore.double_factorize_t2(amplitudes.t2)
    loss_truncated = compress.reconstruction_loss(
        dfcore.truncate(df_full, df.nterms), amplitudes.t2
    )
    loss_compressed = compress.reconstruction_loss(df, amplitudes.t2)
    regularization = config.effective_regularization()

    os.makedirs(config.output_dir, exist_ok=True)
    out = os.path.join(config.output_dir, "compressed.df")
    dfcore.write_df_file(df, out)
    trace_path = os.path.join(config.output_dir, "compress_trace.txt")
    with open(trace_path, "w") as handle:
        if regularization:
            handle.write("stage nterms loss_initial loss_final_regularized\n")
        else:
            handle.write("stage nterms loss_initial loss_final\n")
        for stage, (nterms, first, last) in enumerate(history):
            handle.write(f"{stage} {nterms} {first:.12e} {last:.12e}\n")

    lines = [
        f"reps {df.nterms}",
        f"regularization {regularization}",
        f"mask {config.mask}",
        f"stages {len(history)}",
        f"loss_truncated {loss_truncated:.6e}",
        f"loss_compressed {loss_compressed:.6e}",
    ]
    if regularization:
        lines.append(f"loss_final_regularized {history[-1][2]:.6e}")
    lines += [f"factorization {out}", f"trace {trace_path}"]
    _report(config, "compress", lines)
    return EXIT_OK


def cmd_energy(config: RunConfig) -> int:
    hamiltonian = _load_hamiltonian(config)
    amplitudes = (
        chemio.read_amplitudes(config.amplitudes) if config.amplitudes else None
    )
    operator, notes = _operator_from_config(config, amplitudes)
    if operator.norb != hamiltonian.norb:
        raise ConfigError("parameter and Hamiltonian orbital counts differ")
    reference = ucjsim.prepare_hartree_fock(hamiltonian.norb, hamiltonian.nelec)
    if config.method == "sample-opt" and config.ucj is None:
        opt = sampleopt.optimize_sample_energy(
            operator, hamiltonian, reference, _sample_opt_config(config, hamiltonian.norb)
        )
        operator = opt.operator
        notes.append(f"sample-opt evaluations {len(opt.trace)} objective {_hartree(opt.energy)}")
    state = ucjsim.prepare_ucj_state(operator, reference)
    ref_det = detci.hartree_fock_determinant(hamiltonian.norb, hamiltonian.nelec)
    e_hf = detci.determinant_energy(hamiltonian, ref_det)
    e_vqe = ucjsim.vqe_energy(state, hamiltonian)
    result = qsci.batched_qsci(state, hamiltonian, _qsci_config(config))
    lines = notes + [
        f"hf_energy {_hartree(e_hf)}",
        f"vqe_energy {_hartree(e_vqe)}",
        f"entropy {ucjsim.entropy(state):.6f}",
    ]
    if state.dim <= 4000:
        e_fci, _ = detci.fci_ground_state(hamiltonian)
        lines.append(f"fci_energy {_hartree(e_fci)}")
        lines.append(f"vqe_error {e_vqe - e_fci:.3e}")
        lines.append(f"qsci_mean_error {result.mean_energy - e_fci:.3e}")
    lines.extend(qsci.format_report(result).splitlines())
    _report(config, "energy", lines)
    return EXIT_OK


def random_ucj_operator(
    norb: int,
    reps: int,
    mask: compress.ConnectivityMask,
    seed: int,
    with_final_rotation: bool = True,
) -> ucjsim.UCJOperator:
    """Haar-random rotations and uniform [-pi, pi] mask-allowed couplings."""
    rng = np.random.default_rng(seed)
    rotations = np.array(
        [scipy.stats.unitary_group.rvs(norb, random_state=rng) for _ in range(reps)]
    ).reshape(reps, norb, norb)
    couplings_aa = np.zeros((reps, norb, norb))
    couplings_ab = np.zeros((reps, norb, norb))
    for mu in range(reps):
        for (p, q) in sorted(mask.aa_pairs):
            value = rng.uniform(-np.pi, np.pi)
            couplings_aa[mu, p, q] = couplings_aa[mu, q, p] = value
        for (p, q) in sorted(mask.ab_pairs):
            value = rng.uniform(-np.pi, np.pi)
            couplings_ab[mu, p, q] = couplings_ab[mu, q, p] = value
    final = scipy.stats.unitary_group.rvs(norb, random_state=rng) if with_final_rotation else None
    return ucjsim.UCJOperator(
        rotations=rotations,
        couplings_aa=couplings_aa,
        couplings_ab=couplings_ab,
        final_rotation=final,
    )


def cmd_random_params(config: RunConfig) -> int:
    norb = config.norb
    if norb is None and config.fcidump is not None:
        norb = chemio.read_fcidump(config.fcidump).norb
    if norb is None:
        raise ConfigError("random-params requires 'norb' or 'fcidump'")
    operator = random_ucj_operator(
        norb=norb,
        reps=config.reps,
        mask=_mask_for(config, norb),
        seed=config.seed,
        with_final_rotation=config.with_final_rotation,
    )
    os.makedirs(config.output_dir, exist_ok=True)
    out = config.ucj or os.path.join(config.output_dir, "random.ucj")
    ucjsim.write_ucj_file(operator, out)
    _report(config, "random_params", [
        f"norb {norb} reps {config.reps} mask {config.mask} seed {config.seed}",
        f"parameters {out}",
    ])
    return EXIT_OK


def cmd_sample_opt(config: RunConfig) -> int:
    hamiltonian = _load_hamiltonian(config)
    amplitudes = (
        chemio.read_amplitudes(config.amplitudes) if config.amplitudes else None
    )
    operator, notes = _operator_from_config(config, amplitudes)
    reference = ucjsim.prepare_hartree_fock(hamiltonian.norb, hamiltonian.nelec)
    optimized, trace = sampleopt.optimize_sample_energy(
        operator, hamiltonian, reference, _sample_opt_config(config, hamiltonian.norb)
    )
    os.makedirs(config.output_dir, exist_ok=True)
    out = os.path.join(config.output_dir, "optimized.ucj")
    ucjsim.write_ucj_file(optimized, out)
    trace_path = os.path.join(config.output_dir, "sample_opt_trace.txt")
    best = math.inf
    with open(trace_path, "w") as handle:
        handle.write("evaluation objective incumbent\n")
        for index, (_, value) in enumerate(trace):
            flag = 1 if value < best else 0
            best = min(best, value)
            handle.write(f"{index} {value:.12e} {flag}\n")
    initial = trace[0][1] if trace else math.nan
    final = min((value for _, value in trace), default=math.nan)
    _report(config, "sample_opt", notes + [
        f"evaluations {len(trace)}",
        f"objective_initial {_hartree(initial)}",
        f"objective_final {_hartree(final)}",
        f"parameters {out}",
        f"trace {trace_path}",
    ])
    return EXIT_OK


def cmd_qsci_from_file(config: RunConfig) -> int:
    hamiltonian = _load_hamiltonian(config)
    _require(config, "bitstrings")
    samples = chemio.read_bitstrings(config.bitstrings, hamiltonian.norb)
    valid = qsci.filter_valid(samples, hamiltonian.nelec)
    fraction = len(valid) / len(samples) if len(samples) else 0.0
    header = [
        f"draws {len(samples)}",
        f"valid {len(valid)}",
        f"valid_fraction {fraction:.6f}",
    ]
    if len(valid) == 0:
        _report(config, "qsci_file", header + ["error no sampled determinant matches the target sector"])
        return EXIT_NUMERICAL
    try:
        result = qsci.batched_qsci(samples, hamiltonian, _qsci_config(config))
    except ValueError as exc:
        _report(config, "qsci_file", header + [f"error {exc}"])
        return EXIT_NUMERICAL
    _report(config, "qsci_file", header + qsci.format_report(result).splitlines())
    return EXIT_OK


COMMANDS = {
    "fci": cmd_fci,
    "cisd-amps": cmd_cisd_amps,
    "factorize": cmd_factorize,
    "compress": cmd_compress,
    "energy": cmd_energy,
    "random-params": cmd_random_params,
    "sample-opt": cmd_sample_opt,
    "qsci-file": cmd_qsci_from_file,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ucjkit",
        description="Compressed double-factorized circuit initialization pipeline.",
        epilog=f"Worker threads for batched solves are capped by ${qsci.THREAD_ENV_VAR}.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fci", "full CI ground energy of an FCIDUMP Hamiltonian"),
        ("cisd-amps", "CISD ground state converted to t1/t2 amplitudes"),
        ("factorize", "exact double factorization of stored amplitudes"),
        ("compress", "compressed double factorization of stored amplitudes"),
        ("energy", "variational and sampled subspace energies of a circuit"),
        ("random-params", "write random circuit parameters"),
        ("sample-opt", "pattern-search circuit parameters against sampled energies"),
        ("qsci-file", "batched subspace energies from a bitstring file"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="INI-style configuration file")
        cmd.add_argument("--fcidump", help="FCIDUMP input path")
        cmd.add_argument("--amplitudes", help="AMP v1 amplitude file")
        cmd.add_argument("--ucj", help="UCJ v1 parameter file")
        cmd.add_argument("--bitstrings", help="sampled bitstring file")
        cmd.add_argument("--out", dest="output_dir", help="output directory")
        cmd.add_argument("--norb", type=int, help="orbital count (random-params)")
        cmd.add_argument("--method", choices=METHODS)
        cmd.add_argument("--reps", type=int, help="retained factorization terms")
        cmd.add_argument("--lambda", dest="regularization", type=float,
                         help="coupling-norm regularizer weight")
        cmd.add_argument("--mask", choices=("square", "heavy-hex", "all"))
        cmd.add_argument("--multistage", dest="multistage", action="store_true", default=None)
        cmd.add_argument("--single-stage", dest="multistage", action="store_false", default=None)
        cmd.add_argument("--start-reps", dest="start_reps", type=int)
        cmd.add_argument("--stage-step", dest="stage_step", type=int)
        cmd.add_argument("--max-iter", dest="max_iter", type=int)
        cmd.add_argument("--reference-norm", dest="reference_norm",
                         choices=("full", "retained"))
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--total-samples", dest="total_samples", type=int)
        cmd.add_argument("--batches", type=int)
        cmd.add_argument("--batch-size", dest="batch_size", type=int)
        cmd.add_argument("--shots", type=int)
        cmd.add_argument("--davidson-tol", dest="davidson_tol", type=float)
        cmd.add_argument("--budget", type=int)
        cmd.add_argument("--subproblem-size", dest="subproblem_size", type=int)
        cmd.add_argument("--subproblem-budget", dest="subproblem_budget", type=int)
        cmd.add_argument("--initial-mesh", dest="initial_mesh", type=float)
        cmd.add_argument("--no-final-rotation", dest="with_final_rotation",
                         action="store_false", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config")
    }
    try:
        config = load_config(args.config, overrides)
        return COMMANDS[args.command](config)
    except detci.ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
