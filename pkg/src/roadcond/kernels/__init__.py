"""Sparse propagation kernel with backend selection at import.

``csr_matmul`` computes out = S @ H for a CSR sparse matrix S and a dense
row-major float64 matrix H. The compiled Cython kernel is preferred; the
numpy fallback accumulates in the identical order, so the two backends
produce bit-identical results (see benchmarks/bench_kernels.py).
"""

from __future__ import annotations

from roadcond.kernels._csr_py import csr_matmul as csr_matmul_py

try:
    from roadcond.kernels._csr import csr_matmul as _csr_matmul_ext
except ImportError:
    _csr_matmul_ext = None

if _csr_matmul_ext is not None:
    csr_matmul = _csr_matmul_ext
    BACKEND = "cython"
else:
    csr_matmul = csr_matmul_py
    BACKEND = "python"

__all__ = ["csr_matmul", "csr_matmul_py", "BACKEND"]
