"""Small complex-polynomial toolkit for rational quadratic differentials.

Coefficients are Python complex numbers stored low degree first.  This is
enough for the monomial bases the deformation theory needs (coefficients 0
and 1, later scaled by real ray parameters); exactness lives upstream in
the divisor bookkeeping, where pole orders are plain integers.
"""

from __future__ import annotations

import numpy as np


def trim(coeffs: list[complex]) -> list[complex]:
    c = list(coeffs)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return c


def degree(coeffs: list[complex]) -> int:
    c = trim(coeffs)
    if len(c) == 1 and c[0] == 0:
        return -1  # the zero polynomial, degree -infinity by convention
    return len(c) - 1


def add(a: list[complex], b: list[complex]) -> list[complex]:
    n = max(len(a), len(b))
    return trim([(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)])


def scale(a: list[complex], k: complex) -> list[complex]:
    return trim([k * c for c in a])


def mul(a: list[complex], b: list[complex]) -> list[complex]:
    out = [0j] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return trim(out)


def poly_pow(a: list[complex], k: int) -> list[complex]:
    if k < 0:
        raise ValueError("negative power of a polynomial")
    out = [1 + 0j]
    base = list(a)
    while k:
        if k & 1:
            out = mul(out, base)
        base = mul(base, base)
        k >>= 1
    return out


def evaluate(coeffs: list[complex], z):
    """Horner evaluation; z may be a numpy array."""
    acc = np.zeros_like(np.asarray(z, dtype=complex))
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


def compose_linear_pair(coeffs: list[complex], p: list[complex], q: list[complex], n: int) -> list[complex]:
    """Homogenised substitution: given P of degree <= n, return the
    polynomial sum_j P_j * p^j * q^(n-j).  Used for P((p/q)) * q^n."""
    if degree(coeffs) > n:
        raise ValueError("polynomial degree exceeds the homogenisation order")
    out = [0j]
    for j, cj in enumerate(coeffs):
        if cj == 0:
            continue
        term = scale(mul(poly_pow(p, j), poly_pow(q, n - j)), cj)
        out = add(out, term)
    return out


def roots(coeffs: list[complex]) -> np.ndarray:
    c = trim(coeffs)
    if degree(c) < 1:
        return np.array([], dtype=complex)
    return np.roots(np.array(list(reversed(c)), dtype=complex))
