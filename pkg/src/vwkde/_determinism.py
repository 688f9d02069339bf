"""Deterministic execution of thread-count-sensitive BLAS reductions.

Large-k matrix products and factorizations can change in the last ulp when
the BLAS pool size changes. Outputs must not depend on the machine's core
count or a --threads setting, so the few such reductions that feed results
run under a single-threaded pool; everything element-wise or small-k stays
parallel.
"""

from threadpoolctl import threadpool_limits

__all__ = ["deterministic_blas"]


def deterministic_blas():
    """Context manager pinning BLAS/OpenMP pools to one thread."""
    return threadpool_limits(limits=1)
