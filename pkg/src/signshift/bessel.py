"""Bessel functions of the first and second kind for integer order and real argument.

Small and moderate arguments use Miller's backward recurrence normalized by
``J0 + 2 sum J_2k = 1`` together with Neumann series for ``Y0`` and ``Y1``.
Large arguments use the Hankel asymptotic expansion for orders 0 and 1.
Higher orders of ``Y`` follow from the (stable) forward recurrence.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

EULER_GAMMA = 0.57721566490153286061
_ASYMPTOTIC_X = 25.0
_BIG = 1e250


def _miller(nmax: int, x: float) -> tuple[np.ndarray, float]:
    """Backward recurrence values proportional to ``J_0..J_nmax`` and their normalization sum."""
    m = max(nmax, int(x)) + 20 + int(math.sqrt(40.0 * max(nmax, int(x), 1)))
    m += m % 2
    vals = np.zeros(nmax + 1)
    even_sum = 0.0
    j_next, j_cur = 0.0, 1e-300
    for k in range(m, 0, -1):
        j_prev = (2.0 * k / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        # j_cur now holds the value at order k-1
        if k - 1 <= nmax:
            vals[k - 1] = j_cur
        if (k - 1) % 2 == 0 and k - 1 > 0:
            even_sum += j_cur
        if abs(j_cur) > _BIG:
            j_cur /= _BIG
            j_next /= _BIG
            vals /= _BIG
            even_sum /= _BIG
    return vals, 2.0 * even_sum + vals[0]


def _hankel_asymptotic(nu: int, x: float) -> tuple[float, float]:
    mu = 4.0 * nu * nu
    p, q = 1.0, 0.0
    term = 1.0
    k = 1
    last = math.inf
    while k < 200:
        term *= (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) > last:
            break
        if k % 2 == 1:
            q += term * (-1) ** ((k - 1) // 2)
        else:
            p += term * (-1) ** (k // 2)
        last = abs(term)
        if last < 1e-17:
            break
        k += 1
    w = x - (0.5 * nu + 0.25) * math.pi
    amp = math.sqrt(2.0 / (math.pi * x))
    c, s = math.cos(w), math.sin(w)
    return amp * (p * c - q * s), amp * (p * s + q * c)


def bessel_jy_array(nmax: int, x: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(J_0..J_nmax, Y_0..Y_nmax)`` at ``x > 0``.

    ``Y`` entries overflow to ``-inf`` once they exceed the double range.
    """
    x = float(x)
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    if not x > 0:
        raise DomainError(f"Y_n requires x > 0, got {x}")
    top = max(nmax, 1) + 1
    if x < _ASYMPTOTIC_X:
        full, norm = _miller(max(top, 2 * int(x) + 60), x)
        Jf = full / norm
        y0_sum = 0.0
        y1_sum = 0.0
        for k in range(1, (len(Jf) - 1) // 2 + 1):
            sgn = -1.0 if k % 2 else 1.0
            y0_sum += sgn * Jf[2 * k] / k
            y1_sum += sgn * (Jf[2 * k - 1] - Jf[2 * k + 1]) / k if 2 * k + 1 < len(Jf) else 0.0
        lg = math.log(0.5 * x) + EULER_GAMMA
        J = Jf[: top + 1]
        y0 = (2.0 / math.pi) * lg * J[0] - (4.0 / math.pi) * y0_sum
        y1 = (2.0 / math.pi) * (lg * J[1] - J[0] / x) + (2.0 / math.pi) * y1_sum
    else:
        vals, _ = _miller(top, x)
        j0, y0 = _hankel_asymptotic(0, x)
        j1, y1 = _hankel_asymptotic(1, x)
        scale = j0 / vals[0] if abs(j0) >= abs(j1) else j1 / vals[1]
        J = vals * scale
    Y = np.empty(top + 1)
    Y[0], Y[1] = y0, y1
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, top):
            Y[n + 1] = (2.0 * n / x) * Y[n] - Y[n - 1]
    return J[: nmax + 1].copy(), Y[: nmax + 1].copy()


def bessel_jy(n: int, x: float) -> tuple[float, float]:
    """Return ``(J_n(x), Y_n(x))`` for integer ``n >= 0``.

    ``x = 0`` is accepted for ``J`` only; ``Y`` is then reported as ``-inf``.
    Negative arguments raise :class:`DomainError`.
    """
    n = int(n)
    if n < 0:
        raise ValueError("order must be >= 0")
    x = float(x)
    if x == 0.0:
        return (1.0 if n == 0 else 0.0), -math.inf
    if x < 0:
        raise DomainError(f"argument must be >= 0, got {x}")
    J, Y = bessel_jy_array(n, x)
    return float(J[n]), float(Y[n])


def bessel_j(n: int, x: float) -> float:
    return bessel_jy(n, x)[0]


def bessel_y(n: int, x: float) -> float:
    x = float(x)
    if x <= 0:
        raise DomainError(f"Y_n requires x > 0, got {x}")
    return bessel_jy(n, x)[1]


def bessel_jy_derivatives(n: int, x: float) -> tuple[float, float, float, float]:
    """Return ``(J_n, Y_n, J_n', Y_n')`` using ``C_n' = C_{n-1} - (n/x) C_n``."""
    n = int(n)
    J, Y = bessel_jy_array(n + 1, x)
    jp = -J[1] if n == 0 else J[n - 1] - n / x * J[n]
    yp = -Y[1] if n == 0 else Y[n - 1] - n / x * Y[n]
    return float(J[n]), float(Y[n]), float(jp), float(yp)


def hankel1(n: int, x: float) -> complex:
    """Hankel function of the first kind ``J_n + i Y_n`` for integer ``n``."""
    m = abs(int(n))
    j, y = bessel_jy(m, x)
    h = complex(j, y)
    return h if (n >= 0 or m % 2 == 0) else -h


def hankel_log_derivatives(nmax: int, x: float) -> np.ndarray:
    """Return ``H_n'(x)/H_n(x)`` for ``n = 0..nmax`` without overflow.

    Uses the ratio ``rho_n = H_{n+1}/H_n`` with ``rho_n = 2n/x - 1/rho_{n-1}``,
    which keeps the tiny positive imaginary part exact in relative terms.
    """
    J, Y = bessel_jy_array(1, x)
    h0 = complex(J[0], Y[0])
    h1 = complex(J[1], Y[1])
    rho = h1 / h0
    out = np.empty(nmax + 1, dtype=complex)
    for n in range(nmax + 1):
        out[n] = n / x - rho
        rho = 2.0 * (n + 1) / x - 1.0 / rho
    return out
