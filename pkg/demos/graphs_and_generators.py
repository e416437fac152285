"""
Reading, writing and generating graphs
======================================

Matrix Market round trip and the three synthetic families with their
planted partitions.
"""

import io

from pspectral import (SyntheticSpec, connected_components, generate_synthetic,
                       parse_matrix_market, write_matrix_market)

text = """%%MatrixMarket matrix coordinate real general
% directed input; the larger weight of a pair wins
4 4 4
1 2 2.0
2 1 5.0
3 4 1.0
4 4 9.0
"""
g = parse_matrix_market(io.StringIO(text))
print(f"n={g.n} m={g.m}")  # the self-loop on node 4 is dropped
print(g.to_dense())
print("components:", connected_components(g))

buf = io.StringIO()
write_matrix_market(g, buf, comment="cleaned")
print(buf.getvalue())

# planted partitions for experiments
for spec in ("sbm:blocks=4,block_size=50,p_in=0.2,p_out=0.01,seed=1",
             "grid2d:rows=10,cols=12",
             "ring-of-cliques:cliques=5,clique_size=6"):
    g, truth = generate_synthetic(SyntheticSpec.parse(spec))
    print(f"{spec:55s} n={g.n:4d} m={g.m:5d} sizes={truth.sizes().tolist()}")
