"""
The p-Laplacian objective
=========================

Each embedding vector contributes ``A(u)/B(u)`` where ``A`` sums weighted
``|u_i - u_j|^p`` over edges and ``B`` sums ``|u_i|^p``. At p = 2 this is
the Rayleigh quotient of the graph Laplacian.
"""

import numpy as np

from pspectral import Graph, euc_grad, objective, p_laplacian_apply

# path on 4 nodes
g = Graph.from_edges(4, [0, 1, 2], [1, 2, 3])
u = np.array([1.5, 0.5, -0.5, -1.5])

for p in (2.0, 1.6, 1.2):
    print(f"p={p}: F={objective(g, u, p):.6f}  Delta_p u={p_laplacian_apply(g, u, p)}")

# p = 2 agrees with the Rayleigh quotient
L = g.laplacian_dense()
print("Rayleigh quotient:", u @ L @ u / (u @ u))

# the ratio is scale invariant, so the gradient is orthogonal to u
G = euc_grad(g, u, 1.4)
print("<grad, u> =", float(G[0] @ u))

# a quick finite-difference check
h = 1e-6
e = np.zeros(4)
e[1] = 1.0
fd = (objective(g, u + h * e, 1.4) - objective(g, u - h * e, 1.4)) / (2 * h)
print("d/du_1 analytic", G[0, 1], "finite difference", fd)
