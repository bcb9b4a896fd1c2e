"""Dense real linear algebra for the demo workload.

Matrices are 2-d ``numpy.ndarray`` of float64.  Eigenvalue results are
"eigensets": tuples of complex numbers sorted by :func:`eigen_key`
(descending modulus, then descending real part, then descending imaginary
part).

Besides the production path (:func:`hessenberg` + :func:`eig_qr`) this
module carries two independent oracles: characteristic polynomial roots
(:func:`oracle_charpoly_eigs`) and the closed form for tridiagonal Toeplitz
matrices (:func:`toeplitz_tridiag_eigs`).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

CHOP_EPS = 1e-10
DEFLATION_TOL = 1e-12
ORACLE_MAX_ORDER = 16

_EPS = np.finfo(np.float64).eps


class ShapeMismatch(ValueError):
    pass


class NoConvergence(ArithmeticError):
    pass


class OrderTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class TridiagonalSpec:
    """Constant tridiagonal matrix of order ``n``: ``diag`` on the main
    diagonal, ``sup`` at (i, i+1) and ``sub`` at (i+1, i)."""

    n: int
    diag: float = 0.0
    sup: float = 0.0
    sub: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"order must be >= 1, got {self.n}")


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d matrix, got {a.ndim}-d")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _square(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got {a.shape[0]}x{a.shape[1]}")
    return a


def build_tridiagonal(spec: TridiagonalSpec) -> np.ndarray:
    n = spec.n
    m = np.zeros((n, n))
    idx = np.arange(n)
    m[idx, idx] = spec.diag
    m[idx[:-1], idx[1:]] = spec.sup
    m[idx[1:], idx[:-1]] = spec.sub
    return m


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def trace(m) -> float:
    a = _square(m)
    return float(sum(a[i, i] for i in range(a.shape[0])))


def determinant(m) -> float:
    """Determinant by LU factorization with partial pivoting."""
    a = _square(m).copy()
    n = a.shape[0]
    det = 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if a[p, k] == 0.0:
            return 0.0
        if p != k:
            a[[k, p]] = a[[p, k]]
            det = -det
        det *= a[k, k]
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return float(det)


def hessenberg(m) -> np.ndarray:
    """Reduce to upper Hessenberg form with Householder reflectors.

    Columns whose entries below the subdiagonal are already zero are left
    untouched, so a tridiagonal input comes back unchanged.
    """
    h = _square(m).copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        if not np.any(x[1:]):
            continue
        alpha = -math.copysign(np.linalg.norm(x), x[0])
        v = x
        v[0] -= alpha
        v /= np.linalg.norm(v)
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def balance(m) -> np.ndarray:
    """Diagonal similarity by powers of two that evens out row and column norms.

    The scaling is exact in floating point, so the spectrum is unchanged,
    but badly graded inputs such as a tridiagonal matrix with very unequal
    off-diagonals become far better conditioned for QR.
    """
    a = _square(m).copy()
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            c = float(np.sum(np.abs(a[:, i]))) - abs(a[i, i])
            r = float(np.sum(np.abs(a[i, :]))) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def _symmetrized(a: np.ndarray) -> np.ndarray | None:
    """Symmetric twin of a tridiagonal matrix whose off-diagonal pairs have positive products.

    With ``sup[i] * sub[i] > 0`` a diagonal similarity maps the matrix onto the
    symmetric tridiagonal one with off-diagonals ``sqrt(sup[i] * sub[i])``.
    The original can have wildly graded eigenvectors when ``sup / sub`` is far
    from 1; the twin has the same spectrum and none of that sensitivity.
    Returns None when the input does not qualify.
    """
    n = a.shape[0]
    if n < 3 or np.any(np.triu(a, 2)) or np.any(np.tril(a, -2)):
        return None
    sup = np.diag(a, 1)
    sub = np.diag(a, -1)
    prod = sup * sub
    if np.any(prod < 0) or np.any((prod == 0) & ((sup != 0) | (sub != 0))):
        return None
    off = np.sqrt(prod)
    return np.diag(np.diag(a)) + np.diag(off, 1) + np.diag(off, -1)


def eig_qr(m, tol: float = DEFLATION_TOL, max_sweeps: int | None = None) -> tuple[complex, ...]:
    """Eigenvalues by balancing, Hessenberg reduction and Francis double-shift QR.

    The shifts are the two eigenvalues of the trailing 2x2 block of the
    active window, applied implicitly so complex conjugate pairs stay in
    real arithmetic.  A subdiagonal entry is treated as zero once
    ``|H[i+1,i]| <= tol * (|H[i,i]| + |H[i+1,i+1]|)``; when both diagonal
    entries are exactly zero the neighbouring subdiagonal magnitudes stand
    in for their sum (zero-diagonal inputs are common here).  Tridiagonal
    input with positive off-diagonal products is first replaced by its
    symmetric twin; anything else is balanced.

    Raises:
        NoConvergence: if ``max_sweeps`` (default ``100 * n``) QR sweeps
            do not deflate every eigenvalue.
    """
    a = _square(m)
    twin = _symmetrized(a)
    a = hessenberg(balance(a) if twin is None else twin)
    n = a.shape[0]
    if max_sweeps is None:
        max_sweeps = 100 * n
    wr = [0.0] * n
    wi = [0.0] * n
    anorm = float(np.sum(np.abs(np.triu(a, -1))))
    nn = n - 1
    t = 0.0
    sweeps = 0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    if l >= 2:
                        s += abs(a[l - 1, l - 2])
                    if l + 1 <= nn:
                        s += abs(a[l + 1, l])
                    if s == 0.0:
                        s = anorm
                if abs(a[l, l - 1]) <= tol * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if sweeps >= max_sweeps:
                raise NoConvergence(
                    f"QR iteration did not converge in {max_sweeps} sweeps "
                    f"({nn + 1} eigenvalues outstanding)"
                )
            if its and its % 10 == 0:
                # exceptional shift to break cycles
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            sweeps += 1
            _francis_sweep(a, l, nn, x, y, w)
    return eigenset(complex(r, i) for r, i in zip(wr, wi))


def _francis_sweep(a: np.ndarray, l: int, nn: int, x: float, y: float, w: float) -> None:
    # find two consecutive small subdiagonal elements
    m = nn - 2
    while m >= l:
        z = a[m, m]
        r = x - z
        s = y - z
        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
        q = a[m + 1, m + 1] - z - r - s
        r = a[m + 2, m + 1]
        s = abs(p) + abs(q) + abs(r)
        p /= s
        q /= s
        r /= s
        if m == l:
            break
        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
        if u <= _EPS * v:
            break
        m -= 1
    for i in range(m + 2, nn + 1):
        a[i, i - 2] = 0.0
        if i != m + 2:
            a[i, i - 3] = 0.0
    for k in range(m, nn):
        if k != m:
            p = a[k, k - 1]
            q = a[k + 1, k - 1]
            r = a[k + 2, k - 1] if k != nn - 1 else 0.0
            x = abs(p) + abs(q) + abs(r)
            if x != 0.0:
                p /= x
                q /= x
                r /= x
        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
        if s == 0.0:
            continue
        if k == m:
            if l != m:
                a[k, k - 1] = -a[k, k - 1]
        else:
            a[k, k - 1] = -s * x
        p += s
        x = p / s
        y = q / s
        z = r / s
        q /= p
        r /= p
        for j in range(k, nn + 1):
            p = a[k, j] + q * a[k + 1, j]
            if k != nn - 1:
                p += r * a[k + 2, j]
                a[k + 2, j] -= p * z
            a[k + 1, j] -= p * y
            a[k, j] -= p * x
        for i in range(l, min(nn, k + 3) + 1):
            p = x * a[i, k] + y * a[i, k + 1]
            if k != nn - 1:
                p += z * a[i, k + 2]
                a[i, k + 2] -= p * r
            a[i, k + 1] -= p * q
            a[i, k] -= p


# -- eigensets ----------------------------------------------------------------


def eigen_key(z: complex) -> tuple[float, float, float]:
    """Sort key putting larger modulus first, then larger real, then larger
    imaginary part."""
    return (-abs(z), -z.real, -z.imag)


def eigenset(values) -> tuple[complex, ...]:
    return tuple(sorted((complex(v) for v in values), key=eigen_key))


def chop(e, eps: float = CHOP_EPS) -> tuple[complex, ...]:
    """Replace real and imaginary components smaller than ``eps`` in
    magnitude by exact zero."""

    def c(x: float) -> float:
        return 0.0 if abs(x) < eps else x

    return eigenset(complex(c(z.real), c(z.imag)) for z in e)


def match_distance(a, b) -> float:
    """Largest pairwise distance under the best one-to-one matching of two
    eigensets (so near-ties in the sort key cannot misalign them)."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(list(a), dtype=complex)
    b = np.asarray(list(b), dtype=complex)
    if a.shape != b.shape:
        raise ShapeMismatch(f"eigensets of different sizes: {a.size} vs {b.size}")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


# -- oracles ------------------------------------------------------------------


def charpoly(m) -> np.ndarray:
    """Coefficients of det(lambda*I - m), highest degree first, by the
    Faddeev-LeVerrier recurrence."""
    a = _square(m)
    n = a.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    mk = np.zeros_like(a)
    eye = np.eye(n)
    for k in range(1, n + 1):
        mk = a @ mk + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(a @ mk) / k
    return coeffs


def durand_kerner(coeffs, tol: float = 1e-15, max_iter: int = 10_000) -> list[complex]:
    """All roots of the monic polynomial with the given coefficients
    (highest degree first) by simultaneous Weierstrass iteration."""
    c = [complex(x) for x in coeffs]
    if c[0] != 1:
        c = [x / c[0] for x in c]
    n = len(c) - 1
    if n == 0:
        return []
    radius = 1.0 + max(abs(x) for x in c[1:])
    seed = complex(0.4, 0.9)
    z = [radius * seed ** k / abs(seed) ** k for k in range(n)]

    mags = [abs(x) for x in c]

    def p(x: complex) -> tuple[complex, float]:
        # value and a bound on its rounding error
        acc = 0j
        bound = 0.0
        ax = abs(x)
        for coef, mag in zip(c, mags):
            acc = acc * x + coef
            bound = bound * ax + mag
        return acc, 4 * (n + 1) * _EPS * bound

    for _ in range(max_iter):
        delta = 0.0
        settled = True
        for i in range(n):
            denom = 1 + 0j
            for j in range(n):
                if j != i:
                    denom *= z[i] - z[j]
            if denom == 0:
                denom = complex(tol, tol)
            value, noise = p(z[i])
            if abs(value) > noise:
                settled = False
            step = value / denom
            z[i] -= step
            delta = max(delta, abs(step))
        if delta <= tol * radius or settled:
            return z
    raise NoConvergence(f"Durand-Kerner did not converge in {max_iter} iterations")


def oracle_charpoly_eigs(m) -> tuple[complex, ...]:
    """Eigenvalues as roots of the characteristic polynomial.

    The matrix is first scaled by a power of two (exact in binary64) to
    keep the polynomial coefficients near unit size.
    """
    a = _square(m)
    n = a.shape[0]
    if n > ORACLE_MAX_ORDER:
        raise OrderTooLarge(f"characteristic-polynomial oracle supports n <= {ORACLE_MAX_ORDER}, got {n}")
    if n == 0:
        return ()
    peak = float(np.max(np.abs(a)))
    scale = 2.0 ** math.frexp(peak)[1] if peak > 0 else 1.0
    roots = durand_kerner(charpoly(a / scale))
    return eigenset(r * scale for r in roots)


def toeplitz_tridiag_eigs(n: int, diag: float, sup: float, sub: float) -> tuple[complex, ...]:
    """Closed-form eigenvalues diag + 2*sqrt(sup*sub)*cos(k*pi/(n+1))."""
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    root = cmath.sqrt(sup * sub)
    if sup * sub >= 0:
        root = complex(root.real, 0.0)
    return eigenset(diag + 2.0 * root * math.cos(k * math.pi / (n + 1)) for k in range(1, n + 1))
