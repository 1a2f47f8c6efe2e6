"""Pure-numpy CSR @ dense kernel, the fallback backend.

np.add.at applies the row updates sequentially in entry order, matching the
loop order of the compiled kernel, so both backends sum in the same order
and agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def csr_matmul(
    indptr: np.ndarray, indices: np.ndarray, data: np.ndarray, dense: np.ndarray
) -> np.ndarray:
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, dense.shape[1]), dtype=np.float64)
    rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(indptr))
    np.add.at(out, rows, data[:, None] * dense[indices])
    return out
