"""Multiway p-spectral graph clustering on the Grassmann manifold.

The p-Laplacian Rayleigh-quotient objective is minimized with a Riemannian
trust-region Newton method (truncated CG inner solves) for a decreasing
sequence of p, starting from the ordinary spectral embedding at p = 2.
The embedding is then discretized with k-means and scored by ratio cut.
"""

import os as _os

# The worker pool is sized once, when numba is first imported. Reserve at
# least eight workers so that thread-count sweeps work on small hosts too.
_os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, _os.cpu_count() or 1)))

import numba as _numba  # noqa: E402

_numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

from .algebra import (  # noqa: E402
    Context, Monoid, Semiring, SparseMatrix,
    MIN_PLUS, PLUS_TIMES, PLUS_TIMES_INT,
    apply, ewise_apply, fill, fold, vxm,
)
from .graph_io import (  # noqa: E402
    Graph, SyntheticSpec, connected_components, generate_synthetic,
    parse_matrix_market, read_matrix_market, write_matrix_market,
)
from .plap import (  # noqa: E402
    HessianParts, build_hessian_parts, euc_grad, euc_hessian_eta,
    objective, p_laplacian_apply, phi_p,
)
from .manifold import (  # noqa: E402
    ContinuationSchedule, SolverConfig, SolveTrace, continuation_solve,
    init_p2, project_tangent, retract, truncated_cg, trust_region_newton,
)
from .cluster import (  # noqa: E402
    ClusterAssignment, KMeansConfig, confusion_accuracy, cut, kmeans, rcut,
)
from .pipeline import PipelineConfig, RunReport, bench_csv, benchmark, run_pipeline  # noqa: E402

__version__ = "0.1.0"
