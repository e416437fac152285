"""
Semiring kernels on a small sparse matrix
=========================================

The same ``vxm`` kernel computes a matrix-vector product or one round of
shortest-path relaxation, depending on the semiring it is given.
"""

import math

import numpy as np

from pspectral import algebra as alg

# a weighted directed triangle 0 -> 1 -> 2 -> 0 plus a shortcut 0 -> 2
A = alg.SparseMatrix.from_coo((3, 3), [0, 1, 2, 0], [1, 2, 0, 2], [1.0, 2.0, 4.0, 5.0])
print(A.to_dense())

# ordinary arithmetic: out[j] = sum_i v[i] * A[i, j]
v = np.array([1.0, 1.0, 1.0])
print("plus-times:", alg.vxm(v, A))

# tropical arithmetic: distances after one hop from node 0
d = np.array([0.0, math.inf, math.inf])
for hop in range(2):
    d = np.minimum(d, alg.vxm(d, A, alg.MIN_PLUS))
    print(f"min-plus after hop {hop + 1}:", d)

# reductions are sequential and seeded with the monoid identity
print("fold max:", alg.fold(np.array([3.0, -1.0, 7.0]), alg.MAX))

# worker counts change scheduling, never the bits of the result
ctx1, ctx4 = alg.Context(1), alg.Context(min(4, alg.max_threads()))
x = np.random.default_rng(0).standard_normal(3)
print("thread invariant:", alg.vxm(x, A, ctx=ctx1).tobytes() == alg.vxm(x, A, ctx=ctx4).tobytes())
