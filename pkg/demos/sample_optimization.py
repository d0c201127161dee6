"""Tune circuit parameters directly against the sampled subspace energy.

Starts from a one-term truncated factorization on a 4-orbital chain and lets
the derivative-free pattern search lower the sampled QSCI energy under a
fixed shot seed (common random numbers make the objective deterministic).
"""

import numpy as np

from ucjkit import compress, detci, dfcore, numopt, sampleopt, ucjsim
from ucjkit.chemio import Hamiltonian


def make_chain(norb, nelec, hopping=1.0, repulsion=2.0):
    h1_site = np.zeros((norb, norb))
    for p in range(norb - 1):
        h1_site[p, p + 1] = h1_site[p + 1, p] = -hopping
    _, cmat = np.linalg.eigh(h1_site)
    h1 = cmat.T @ h1_site @ cmat
    h2 = repulsion * np.einsum("pi,pj,pk,pl->ijkl", cmat, cmat, cmat, cmat)
    return Hamiltonian(norb=norb, nelec=nelec, h1=h1, h2=h2, ecore=0.0)


hamiltonian = make_chain(4, (2, 2), hopping=0.8, repulsion=2.0)
e_fci, _ = detci.fci_ground_state(hamiltonian)
_, coefficients = detci.cisd_ground_state(hamiltonian)
amplitudes = detci.cisd_to_t_amplitudes(coefficients)
df = dfcore.truncate(dfcore.double_factorize_t2(amplitudes.t2), 1)
initial = ucjsim.ucj_from_df(df, t1=amplitudes.t1)
reference = ucjsim.prepare_hartree_fock(4, (2, 2))

config = sampleopt.SampleOptConfig(
    shots=2000,
    seed=11,
    optimizer=numopt.PatternSearchConfig(
        total_budget=150, subproblem_size=12, subproblem_budget=12, seed=11
    ),
)
initial_value = sampleopt.sample_energy_objective(
    initial, hamiltonian, reference, config
)
result = sampleopt.optimize_sample_energy(initial, hamiltonian, reference, config)

print(f"E_FCI             = {e_fci:.10f}")
print(f"objective initial = {initial_value:.10f}")
print(f"objective final   = {result.energy:.10f}")
print(f"evaluations       = {len(result.trace)}")
print("\nimprovements (ordinal, evaluation count, best value):")
print(numopt.format_trace(result.trace))

final_state = ucjsim.prepare_ucj_state(result.operator, reference)
print(f"\nexact energy of the tuned circuit: "
      f"{ucjsim.vqe_energy(final_state, hamiltonian):.10f}")
