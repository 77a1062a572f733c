"""Pfaffian of complex antisymmetric matrices via skew elimination.

Parlett-Reid-style reduction with partial pivoting: congruence updates
bring the matrix to skew tridiagonal form while tracking the pivot
factors, whose product is the Pfaffian.
"""

from __future__ import annotations

import numpy as np

__all__ = ["pfaffian"]


def pfaffian(a: np.ndarray) -> complex:
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n and np.max(np.abs(a + a.T)) > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise ValueError("matrix is not antisymmetric")
    if n % 2 == 1:
        return 0.0 + 0.0j
    if n == 0:
        return 1.0 + 0.0j

    result = 1.0 + 0.0j
    for k in range(0, n - 1, 2):
        col = np.abs(a[k + 1:, k])
        kp = k + 1 + int(np.argmax(col))
        if col[kp - k - 1] == 0.0:
            return 0.0 + 0.0j
        if kp != k + 1:
            a[[k + 1, kp], :] = a[[kp, k + 1], :]
            a[:, [k + 1, kp]] = a[:, [kp, k + 1]]
            result = -result
        result *= a[k, k + 1]
        if k + 2 < n:
            tau = a[k, k + 2:] / a[k, k + 1]
            a[k + 2:, k + 2:] += np.outer(tau, a[k + 2:, k + 1])
            a[k + 2:, k + 2:] -= np.outer(a[k + 2:, k + 1], tau)
    return complex(result)
