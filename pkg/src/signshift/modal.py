"""Semi-analytic solver for circularly layered media.

Each angular mode ``n`` of the lossy equation reduces to

    (1/r)(r p u')' + (q - p n^2 / r^2) u = f_n,   p = s a,  q = k^2 s0 sigma + i delta,

with ``s = -1 - i delta`` inside ``D`` and ``1`` outside.  The radial problem is
discretized with piecewise-linear elements on a layer-conforming grid (a
conservative second-order scheme whose flux continuity at breakpoints is
natural), and closed at ``r = R`` by the exact outgoing condition
``u_n'(R) = Lambda_n u_n(R)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .bessel import hankel_log_derivatives
from .errors import SingularSystem, ValidationError
from .medium import ScalarCoefficient

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


def dtn_coefficient(n: int, k: float, R: float) -> complex:
    """Outgoing Dirichlet-to-Neumann coefficient ``k H_n'(kR)/H_n(kR)``."""
    if not (k > 0 and R > 0):
        raise ValueError("k and R must be positive")
    m = abs(int(n))
    return complex(k * hankel_log_derivatives(m, k * R)[m])


def dtn_coefficients(nmax: int, k: float, R: float) -> np.ndarray:
    """Array of ``Lambda_n`` for ``n = 0..nmax``."""
    if not (k > 0 and R > 0):
        raise ValueError("k and R must be positive")
    return k * hankel_log_derivatives(int(nmax), k * R)


def default_mode_count(k: float, R: float) -> int:
    return max(16, 2 * math.ceil(k * R) + 8)


@dataclass(frozen=True)
class Layer:
    """Radial layer ``[r_in, r_out]`` with coefficient ``a``, ``sigma(r)`` and sign."""

    r_in: float
    r_out: float
    a: float
    sigma: ScalarCoefficient
    sign: int


@dataclass(frozen=True)
class LayeredMedium:
    """Concentric layers ``0 = r_0 < r_1 < ... < r_m = R``."""

    layers: tuple
    k: float

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValidationError("need at least one layer")
        if layers[0].r_in != 0.0:
            raise ValidationError("first layer must start at r = 0")
        for lo, hi in zip(layers, layers[1:]):
            if lo.r_out != hi.r_in:
                raise ValidationError("layers must be contiguous")
        for L in layers:
            if not L.r_out > L.r_in:
                raise ValidationError("layer radii must increase")
            if L.a <= 0:
                raise ValidationError("layer coefficient a must be positive")
            if L.sign not in (1, -1):
                raise ValidationError("layer sign must be +1 or -1")
        last = layers[-1]
        if not (last.a == 1.0 and last.sign == 1 and last.sigma.kind == "constant" and last.sigma.value == 1.0):
            raise ValidationError("outermost layer must have a = 1, sigma = 1, s = +1")
        if not self.k > 0:
            raise ValidationError("k must be positive")

    @property
    def R(self) -> float:
        return self.layers[-1].r_out

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([0.0] + [L.r_out for L in self.layers])

    @classmethod
    def simple(cls, radii: Sequence[float], a: Sequence[float], sigma: Sequence, sign: Sequence[int], k: float):
        """Build from lists; ``radii`` are the outer radii of consecutive layers."""
        layers = []
        r0 = 0.0
        for r, aa, ss, sg in zip(radii, a, sigma, sign):
            sc = ss if isinstance(ss, ScalarCoefficient) else ScalarCoefficient.from_spec(ss)
            layers.append(Layer(r0, float(r), float(aa), sc, int(sg)))
            r0 = float(r)
        return cls(tuple(layers), float(k))


def radial_grid(medium: LayeredMedium, cells_per_layer: int) -> tuple[np.ndarray, np.ndarray]:
    """Layer-conforming uniform grid and the layer index of every cell."""
    if cells_per_layer < 1:
        raise ValueError("cells_per_layer must be positive")
    pts = [np.array([0.0])]
    owner = []
    for j, L in enumerate(medium.layers):
        pts.append(np.linspace(L.r_in, L.r_out, cells_per_layer + 1)[1:])
        owner.append(np.full(cells_per_layer, j))
    return np.concatenate(pts), np.concatenate(owner)


@dataclass
class RadialModeSolution:
    """Nodal values of one angular mode on the radial grid."""

    n: int
    r: np.ndarray
    u: np.ndarray
    dtn: complex
    pivot_indicator: float
    delta: float

    def __call__(self, rr) -> np.ndarray:
        rr = np.asarray(rr, dtype=float)
        return np.interp(rr, self.r, self.u.real) + 1j * np.interp(rr, self.r, self.u.imag)


class RadialSystem:
    """Assembled pieces of the per-mode radial problem (independent of ``n`` and ``f``)."""

    def __init__(self, medium: LayeredMedium, delta: float, cells_per_layer: int):
        self.medium = medium
        self.delta = float(delta)
        self.r, owner = radial_grid(medium, cells_per_layer)
        r = self.r
        h = np.diff(r)
        self.h = h
        self.owner = owner
        a = np.array([L.a for L in medium.layers])[owner]
        sgn = np.array([L.sign for L in medium.layers])[owner]
        s = np.where(sgn < 0, -1.0 - 1j * self.delta, 1.0 + 0j)
        self.p = s * a
        self.a = a
        self.inside = sgn < 0
        # Gauss points per cell
        self.xq = 0.5 * (r[:-1, None] + r[1:, None]) + 0.5 * h[:, None] * _GAUSS_X[None, :]
        self.wq = 0.5 * h[:, None] * _GAUSS_W[None, :]
        sig = np.empty_like(self.xq)
        for j, L in enumerate(medium.layers):
            m = owner == j
            sig[m] = L.sigma.radial(self.xq[m].ravel()).reshape(-1, 3)
        self.q = medium.k**2 * np.where(sgn < 0, -1.0, 1.0)[:, None] * sig + 1j * self.delta
        self.phi0 = (r[1:, None] - self.xq) / h[:, None]
        self.phi1 = (self.xq - r[:-1, None]) / h[:, None]

    def _cellmats(self, coef_q: np.ndarray, weight: np.ndarray):
        w = self.wq * weight * coef_q
        m00 = np.sum(w * self.phi0 * self.phi0, axis=1)
        m01 = np.sum(w * self.phi0 * self.phi1, axis=1)
        m11 = np.sum(w * self.phi1 * self.phi1, axis=1)
        return m00, m01, m11

    def _tridiag(self, d00, d01, d11) -> sps.csc_matrix:
        N = len(self.r)
        main = np.zeros(N, dtype=complex)
        main[:-1] += d00
        main[1:] += d11
        return sps.diags([d01, main, d01], [-1, 0, 1], format="csc")

    def parts(self, n: int):
        """Return ``(stiffness, zeroth-order mass, angular term)`` matrices."""
        if not hasattr(self, "_cache"):
            rm = 0.5 * (self.r[:-1] + self.r[1:])
            kst = self.p * rm / self.h
            S = self._tridiag(kst, -kst, kst)
            Mq = self._tridiag(*self._cellmats(self.q, self.xq))
            N1 = self._tridiag(*self._cellmats(self.p[:, None] * np.ones_like(self.xq), 1.0 / self.xq))
            self._cache = (S, Mq, N1)
        S, Mq, N1 = self._cache
        return S, Mq, (n * n) * N1

    def load(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        fq = f(self.xq.ravel()).reshape(self.xq.shape).astype(complex)
        w = self.wq * self.xq * fq
        b = np.zeros(len(self.r), dtype=complex)
        b[:-1] += np.sum(w * self.phi0, axis=1)
        b[1:] += np.sum(w * self.phi1, axis=1)
        return b


def _pivot_indicator(lu) -> float:
    d = np.abs(lu.U.diagonal())
    return float(d.min() / d.max()) if d.max() > 0 else 0.0


def solve_radial_mode(medium: LayeredMedium, n: int, f_n: Callable[[np.ndarray], np.ndarray], delta: float,
                      cells_per_layer: int = 1024, system: Optional[RadialSystem] = None) -> RadialModeSolution:
    """Solve one angular mode with the exact outgoing closure at ``r = R``."""
    if cells_per_layer < 64 and system is None:
        raise ValueError("need at least 64 cells per layer")
    sysm = system or RadialSystem(medium, delta, cells_per_layer)
    S, Mq, Nn = sysm.parts(n)
    lam = dtn_coefficient(n, medium.k, medium.R)
    N = len(sysm.r)
    bc = sps.csc_matrix(([medium.R * lam], ([N - 1], [N - 1])), shape=(N, N))
    K = (-S + Mq - Nn + bc).tocsc()
    b = sysm.load(f_n)
    free = np.arange(N) if n == 0 else np.arange(1, N)
    Kf = K if n == 0 else K[1:, 1:]
    try:
        lu = spla.splu(Kf.tocsc(), permc_spec="NATURAL")
    except RuntimeError as exc:
        raise SingularSystem(f"mode {n}: {exc}", 0.0) from exc
    piv = _pivot_indicator(lu)
    u = np.zeros(N, dtype=complex)
    u[free] = lu.solve(b[free])
    if not np.all(np.isfinite(u)):
        raise SingularSystem(f"mode {n}: non-finite solution", piv)
    return RadialModeSolution(int(n), sysm.r, u, lam, piv, float(delta))


def transmission_residuals(sol: RadialModeSolution, medium: LayeredMedium, f_n,
                           system: Optional[RadialSystem] = None) -> np.ndarray:
    """Relative mismatch of the one-sided discrete fluxes ``r s a u_n'`` at interior breakpoints.

    Fluxes are the variational (Galerkin-consistent) traces: the contribution of
    the cells on each side to the equation row of the breakpoint node.  ``u_n``
    is continuous by construction, so this is the full transmission residual.
    """
    sysm = system or RadialSystem(medium, sol.delta, (len(sol.r) - 1) // len(medium.layers))
    u = sol.u
    rm = 0.5 * (sysm.r[:-1] + sysm.r[1:])
    kst = sysm.p * rm / sysm.h
    z = sysm.q - sol.n**2 * sysm.p[:, None] / sysm.xq**2
    m00, m01, m11 = sysm._cellmats(z, sysm.xq)
    fq = f_n(sysm.xq.ravel()).reshape(sysm.xq.shape).astype(complex)
    w = sysm.wq * sysm.xq * fq
    b0 = np.sum(w * sysm.phi0, axis=1)
    b1 = np.sum(w * sysm.phi1, axis=1)
    out = []
    for rb in medium.breakpoints[1:-1]:
        j = int(np.argmin(np.abs(sysm.r - rb)))
        cl, cr = j - 1, j
        left = -kst[cl] * (u[j] - u[j - 1]) + m01[cl] * u[j - 1] + m11[cl] * u[j] - b1[cl]
        right = -kst[cr] * (u[j] - u[j + 1]) + m00[cr] * u[j] + m01[cr] * u[j + 1] - b0[cr]
        flux_l, flux_r = -left, right
        out.append(abs(flux_l - flux_r) / max(abs(flux_l), abs(flux_r), 1e-300))
    return np.array(out)


def mode_power_terms(sol: RadialModeSolution, medium: LayeredMedium, f_n, cells_per_layer: int,
                     system: Optional[RadialSystem] = None) -> tuple[float, float]:
    """Both sides of the imaginary-part energy identity for one mode (per unit angle).

    Returns ``(delta (int_D a |u'|^2 + a n^2 |u|^2 / r^2) + delta int |u|^2 + R Im(Lambda) |u(R)|^2,
    Im int f conj(u))``, all integrals weighted by ``r``.
    """
    sysm = system or RadialSystem(medium, sol.delta, cells_per_layer)
    u = sol.u
    uc = u.conj()
    rm = 0.5 * (sysm.r[:-1] + sysm.r[1:])
    du = np.diff(u) / sysm.h
    grad = np.sum(np.where(sysm.inside, sysm.a * rm * np.abs(du) ** 2 * sysm.h, 0.0))
    ang = 0.0
    if sol.n != 0:
        Na = sysm._tridiag(*sysm._cellmats(sol.n**2 * np.where(sysm.inside, sysm.a, 0.0)[:, None] * np.ones_like(sysm.xq), 1.0 / sysm.xq))
        ang = float(np.real(uc @ (Na @ u)))
    M1 = sysm._tridiag(*sysm._cellmats(np.ones_like(sysm.xq), sysm.xq))
    mass = float(np.real(uc @ (M1 @ u)))
    rad = medium.R * sol.dtn.imag * abs(u[-1]) ** 2
    src = float(np.imag(uc @ sysm.load(f_n)))
    return sol.delta * (grad + ang) + sol.delta * mass + rad, src


def mode_power_balance(sol: RadialModeSolution, medium: LayeredMedium, f_n, cells_per_layer: int,
                       system: Optional[RadialSystem] = None) -> float:
    """Relative residual of the imaginary-part energy identity for one mode."""
    lhs, src = mode_power_terms(sol, medium, f_n, cells_per_layer, system)
    scale = max(abs(lhs), abs(src), 1e-300)
    return abs(lhs - src) / scale


def field_power_balance(field_: "ModalField", medium: LayeredMedium, source: "Source") -> float:
    """Relative residual of the energy identity for the synthesized field (sum over modes)."""
    fns = source.mode_functions(field_.n_modes)
    lhs = src = 0.0
    cells = (len(field_.r) - 1) // len(medium.layers)
    for n, sol in field_.modes.items():
        a, b = mode_power_terms(sol, medium, fns[n], cells, field_.system)
        lhs += a
        src += b
    scale = max(abs(lhs), abs(src), 1e-300)
    return abs(lhs - src) / scale


# ---------------------------------------------------------------------------
# sources and synthesis


def bump(r: np.ndarray, center: float, width: float) -> np.ndarray:
    """Smooth compact bump ``cos^4`` of half-width ``width`` around ``center``."""
    z = (np.asarray(r, dtype=float) - center) / width
    return np.where(np.abs(z) < 1.0, np.cos(0.5 * np.pi * z) ** 4, 0.0)


@dataclass(frozen=True)
class RingPatch:
    """Source ``amplitude * bump(r) * g(theta)``.

    ``modes`` (dict n -> complex coefficient) gives ``g`` as a Fourier sum;
    otherwise ``g`` is an angular ``cos^4`` bump of half-width ``angular_width``
    centered at ``angle``.
    """

    radius: float
    width: float
    amplitude: float = 1.0
    angle: float = 0.0
    angular_width: Optional[float] = None
    modes: Optional[tuple] = None

    def radial(self, r):
        return self.amplitude * bump(r, self.radius, self.width)

    def angular(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.modes is not None:
            out = np.zeros(theta.shape, dtype=complex)
            for n, c in self.modes:
                out += complex(c) * np.exp(1j * n * theta)
            return out
        d = np.angle(np.exp(1j * (theta - self.angle)))
        return bump(d, 0.0, self.angular_width).astype(complex)

    def coefficients(self, nmax: int) -> dict[int, complex]:
        """Fourier coefficients ``g_n`` for ``|n| <= nmax``."""
        if self.modes is not None:
            return {int(n): complex(c) for n, c in self.modes if abs(n) <= nmax}
        M = 4096
        th = 2.0 * np.pi * np.arange(M) / M
        g = np.fft.fft(self.angular(th)) / M
        return {n: complex(g[n % M]) for n in range(-nmax, nmax + 1)}

    def __call__(self, x) -> np.ndarray:
        p = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.hypot(p[:, 0], p[:, 1])
        th = np.arctan2(p[:, 1], p[:, 0])
        return self.radial(r) * self.angular(th)


@dataclass(frozen=True)
class Source:
    """Finite sum of ring patches."""

    patches: tuple

    def __call__(self, x) -> np.ndarray:
        p = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(p), dtype=complex)
        for q in self.patches:
            out += q(p)
        return out

    def mode_functions(self, nmax: int) -> dict[int, Callable]:
        coeffs: dict[int, list] = {}
        for q in self.patches:
            for n, c in q.coefficients(nmax).items():
                if c != 0:
                    coeffs.setdefault(n, []).append((q, c))
        out = {}
        for n, lst in coeffs.items():
            out[n] = (lambda r, lst=lst: sum(c * q.radial(r) for q, c in lst))
        return out

    def support_radii(self) -> tuple[float, float]:
        lo = min(q.radius - q.width for q in self.patches)
        hi = max(q.radius + q.width for q in self.patches)
        return lo, hi


@dataclass
class ModalField:
    """Field synthesized from radial mode solutions: ``u = sum_n u_n(r) e^{i n theta}``."""

    modes: dict
    r: np.ndarray
    delta: float
    tail: float
    pivot_indicator: float
    n_modes: int = 0
    system: Optional[RadialSystem] = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray:
        p = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.hypot(p[:, 0], p[:, 1])
        th = np.arctan2(p[:, 1], p[:, 0])
        out = np.zeros(len(p), dtype=complex)
        for n, sol in self.modes.items():
            out += sol(r) * np.exp(1j * n * th)
        return out

    def polar_values(self, n_theta: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        th = 2.0 * np.pi * np.arange(n_theta) / n_theta
        U = np.zeros((len(self.r), n_theta), dtype=complex)
        for n, sol in self.modes.items():
            U += sol.u[:, None] * np.exp(1j * n * th)[None, :]
        return self.r, th, U

    def mode_energy(self) -> dict[int, float]:
        """Radial ``L^2`` energy ``2 pi int |u_n|^2 r dr`` per mode (trapezoid)."""
        out = {}
        for n, sol in self.modes.items():
            out[n] = float(2.0 * np.pi * np.trapezoid(np.abs(sol.u) ** 2 * sol.r, sol.r))
        return out

    def l2_annulus(self, r_lo: float, r_hi: float) -> float:
        """``L^2`` norm over ``r_lo < r < r_hi`` by Parseval (Gauss per grid cell)."""
        r = self.r
        total = 0.0
        for sol in self.modes.values():
            rr = np.clip(r, r_lo, r_hi)
            xq = 0.5 * (rr[:-1, None] + rr[1:, None]) + 0.5 * np.diff(rr)[:, None] * _GAUSS_X
            wq = 0.5 * np.diff(rr)[:, None] * _GAUSS_W
            total += 2.0 * np.pi * float(np.sum(wq * np.abs(sol(xq)) ** 2 * xq))
        return math.sqrt(total)

    def write_polar_csv(self, path, n_r: int = 200, n_theta: int = 64) -> None:
        """Write ``r,theta,re,im`` on a uniform polar grid."""
        rr = np.linspace(0.0, float(self.r[-1]), n_r)
        th = 2.0 * np.pi * np.arange(n_theta) / n_theta
        U = np.zeros((n_r, n_theta), dtype=complex)
        for n, sol in self.modes.items():
            U += sol(rr)[:, None] * np.exp(1j * n * th)[None, :]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("r,theta,re,im\n")
            for i, r in enumerate(rr):
                for j, t in enumerate(th):
                    fh.write(f"{float(r)!r},{float(t)!r},{float(U[i, j].real)!r},{float(U[i, j].imag)!r}\n")

    def _cell_quadrature(self, r_lo: float, r_hi: float):
        rr = np.clip(self.r, r_lo, r_hi)
        xq = 0.5 * (rr[:-1, None] + rr[1:, None]) + 0.5 * np.diff(rr)[:, None] * _GAUSS_X
        wq = 0.5 * np.diff(rr)[:, None] * _GAUSS_W
        return xq, wq

    def h1_annulus(self, r_lo: float, r_hi: float) -> float:
        """``H^1`` norm over ``r_lo < r < r_hi``: ``2 pi sum_n int (|u_n'|^2 + (1 + n^2/r^2)|u_n|^2) r dr``."""
        xq, wq = self._cell_quadrature(r_lo, r_hi)
        slope_cells = np.clip(np.searchsorted(self.r, xq, side="right") - 1, 0, len(self.r) - 2)
        total = 0.0
        for n, sol in self.modes.items():
            du = np.diff(sol.u) / np.diff(sol.r)
            uq = sol(xq)
            with np.errstate(divide="ignore", invalid="ignore"):
                ang = np.where(xq > 0, n * n / xq**2, 0.0)
            dens = np.abs(du[slope_cells]) ** 2 + (1.0 + ang) * np.abs(uq) ** 2
            total += 2.0 * np.pi * float(np.sum(wq * dens * xq))
        return math.sqrt(total)

    def source_pairing(self, source: "Source") -> tuple[complex, float]:
        """``(int f conj(u), |f|_{L^2}^2)`` over the whole disk by Parseval."""
        xq, wq = self._cell_quadrature(0.0, float(self.r[-1]))
        fns = source.mode_functions(self.n_modes)
        pair = 0j
        fn2 = 0.0
        for n, fn in fns.items():
            fq = fn(xq)
            fn2 += 2.0 * np.pi * float(np.sum(wq * np.abs(fq) ** 2 * xq))
            if n in self.modes:
                pair += 2.0 * np.pi * complex(np.sum(wq * fq * np.conj(self.modes[n](xq)) * xq))
        return pair, fn2


def modal_solution(medium: LayeredMedium, source: Source, delta: float, n_modes: Optional[int] = None,
                   cells_per_layer: int = 1024) -> ModalField:
    """Synthesize the field from all modes ``|n| <= n_modes`` carried by the source."""
    kR = medium.k * medium.R
    if n_modes is None:
        n_modes = default_mode_count(medium.k, medium.R)
    if n_modes < 2 * math.ceil(kR):
        raise ValueError(f"n_modes must be >= 2 ceil(kR) = {2 * math.ceil(kR)}")
    sysm = RadialSystem(medium, delta, cells_per_layer)
    fns = source.mode_functions(n_modes)
    modes = {}
    piv = 1.0
    for n in sorted(fns):
        sol = solve_radial_mode(medium, n, fns[n], delta, cells_per_layer, system=sysm)
        modes[n] = sol
        piv = min(piv, sol.pivot_indicator)
    field_ = ModalField(modes, sysm.r, float(delta), 0.0, piv, int(n_modes), sysm)
    en = field_.mode_energy()
    tot = sum(en.values())
    edge = [v for n, v in en.items() if abs(n) == max(abs(m) for m in en)]
    field_.tail = float(sum(edge) / tot) if tot > 0 else 0.0
    return field_
