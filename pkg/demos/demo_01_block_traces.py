"""
Block traces without forming Kronecker products
===============================================

Every posterior quantity the EM algorithm needs is a P x P block trace of an
NP x NP matrix.  This demo checks the fast kernels against the dense
matrices they avoid, and shows which factor commutes under the block trace.
"""

import numpy as np

from g3m.kron_linalg import (block_trace_P, kron, kron_sum_inv_block_trace,
                             spectral_decomp)

rng = np.random.default_rng(0)
N, P = 6, 4


def spd(n):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + 0.5 * np.eye(n)


A, B, X = spd(P), spd(P), spd(N)

# The dense route builds a 24 x 24 inverse and traces its 6 x 6 blocks.
dense = block_trace_P(np.linalg.inv(kron(A, np.eye(N)) + kron(B, X)), N, P)

# The fast route needs one eigendecomposition of X and P x P algebra.
fast = kron_sum_inv_block_trace(A, B, spectral_decomp(X))
print("block trace of the inverse, max abs difference:", np.abs(dense - fast).max())

# A factor acting on the traced (inner) index commutes under the block trace...
M = rng.standard_normal((N * P, N * P))
W = kron(np.eye(P), rng.standard_normal((N, N)))
print("tr_P(W M) - tr_P(M W) with W = I kron X:",
      np.abs(block_trace_P(W @ M, N, P) - block_trace_P(M @ W, N, P)).max())

# ...while an outer factor comes out on the side it was applied from.
Q = rng.standard_normal((P, P))
V = kron(Q, np.eye(N))
T = block_trace_P(M, N, P)
print("tr_P((Q kron I) M) - Q tr_P(M):", np.abs(block_trace_P(V @ M, N, P) - Q @ T).max())
print("tr_P(M (Q kron I)) - tr_P(M) Q:", np.abs(block_trace_P(M @ V, N, P) - T @ Q).max())
print("tr_P((Q kron I) M) - tr_P(M (Q kron I)):",
      np.abs(block_trace_P(V @ M, N, P) - block_trace_P(M @ V, N, P)).max())
