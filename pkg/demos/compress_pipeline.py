"""Factorize CISD doubles amplitudes and compress them to a short circuit.

Walks the classical half of the pipeline on a 6-orbital chain: solve CISD,
convert to t amplitudes, double-factorize t2 exactly, then compare naive
truncation against compressed factorizations at a few term counts.
"""

import numpy as np

from ucjkit import compress, detci, dfcore
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
e_cisd, coefficients = detci.cisd_ground_state(hamiltonian)
amplitudes = detci.cisd_to_t_amplitudes(coefficients)
t2 = amplitudes.t2
print(f"CISD energy {e_cisd:.10f}, |t2| = {np.linalg.norm(t2):.6f}")

df = dfcore.double_factorize_t2(t2)
print(f"exact factorization has {df.nterms} terms")
print(f"reconstruction residual {np.linalg.norm(dfcore.reconstruct_t2(df) - t2):.3e}")

mask = compress.ConnectivityMask.from_preset("heavy-hex", 6)
print("\nterms  truncation loss  compressed loss")
for reps in (1, 2, 4):
    history = []
    compress.compress(
        dfcore.truncate(df, reps),
        t2,
        compress.CompressionConfig(reps=reps, max_iter=100),
        mask=mask,
        df_full=df,
        history=history,
    )
    _, loss_start, loss_final = history[-1]
    print(f"{reps:5d}  {loss_start:.6e}   {loss_final:.6e}")

# Multistage: re-optimize while peeling terms off instead of cutting at once.
history = []
compress.multistage_compress(
    df,
    t2,
    compress.CompressionConfig(reps=2, stage_step=2, max_iter=100),
    mask=mask,
    history=history,
)
print("\nmultistage stages (terms, loss in, loss out):")
for nterms, loss_start, loss_final in history:
    print(f"  {nterms:2d}  {loss_start:.6e}  {loss_final:.6e}")
