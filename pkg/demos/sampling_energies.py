"""Prepare circuit states exactly and score them by sampled subspace energies.

Builds truncated and compressed one-term circuits for a stretched chain,
then compares their exact expectation values and batched QSCI energies
against FCI, Hartree-Fock, and a Haar-random parameter baseline.
"""

import numpy as np

from ucjkit import cli, compress, detci, dfcore, qsci, ucjsim
from ucjkit.chemio import Hamiltonian


def make_chain(norb, nelec, hopping=1.0, repulsion=2.0):
    h1_site = np.zeros((norb, norb))
    for p in range(norb - 1):
        h1_site[p, p + 1] = h1_site[p + 1, p] = -hopping
    _, cmat = np.linalg.eigh(h1_site)
    h1 = cmat.T @ h1_site @ cmat
    h2 = repulsion * np.einsum("pi,pj,pk,pl->ijkl", cmat, cmat, cmat, cmat)
    return Hamiltonian(norb=norb, nelec=nelec, h1=h1, h2=h2, ecore=0.0)


hamiltonian = make_chain(6, (3, 3), hopping=0.6, repulsion=2.4)
e_fci, _ = detci.fci_ground_state(hamiltonian)
e_hf = detci.determinant_energy(
    hamiltonian, detci.hartree_fock_determinant(6, (3, 3))
)
print(f"E_HF  = {e_hf:.10f}")
print(f"E_FCI = {e_fci:.10f}")

_, coefficients = detci.cisd_ground_state(hamiltonian)
amplitudes = detci.cisd_to_t_amplitudes(coefficients)
df = dfcore.double_factorize_t2(amplitudes.t2)
mask = compress.ConnectivityMask.from_preset("heavy-hex", 6)

df_trunc = dfcore.truncate(df, 1)
df_comp = compress.compress(
    df_trunc,
    amplitudes.t2,
    compress.CompressionConfig(reps=1, max_iter=100),
    mask=mask,
    df_full=df,
)
reference = ucjsim.prepare_hartree_fock(6, (3, 3))
states = {
    "truncated": ucjsim.prepare_ucj_state(
        ucjsim.ucj_from_df(df_trunc, t1=amplitudes.t1, mask=mask), reference
    ),
    "compressed": ucjsim.prepare_ucj_state(
        ucjsim.ucj_from_df(df_comp, t1=amplitudes.t1, mask=mask), reference
    ),
    "random": ucjsim.prepare_ucj_state(
        cli.random_ucj_operator(norb=6, reps=1, mask=mask, seed=0), reference
    ),
}

config = qsci.QsciConfig(total_samples=400, batches=10, batch_size=4, seed=0)
print("\nstate       VQE energy      QSCI mean       entropy")
for label, state in states.items():
    result = qsci.batched_qsci(state, hamiltonian, config)
    print(
        f"{label:10s}  {ucjsim.vqe_energy(state, hamiltonian):.10f}  "
        f"{result.mean_energy:.10f}  {ucjsim.entropy(state):.4f}"
    )

result = qsci.batched_qsci(states["compressed"], hamiltonian, config)
print("\nper-batch report for the compressed state:")
print(qsci.format_report(result))
