"""Reflections through the interface, push-forwards and sufficient-condition checks.

A reflection ``F`` maps the outer tube onto the inner tube and fixes the
interface.  For a coefficient pair ``(A, Sigma)`` the push-forwards are

    F*A(y) = DF(x) A(x) DF(x)^T / J(x),   F*Sigma(y) = Sigma(x) / J(x),

with ``x = F^{-1}(y)`` and ``J = |det DF|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .complementing import check_interface
from .errors import InvalidBeta, OutsideTube, SingularAtCenter, TubeTooWide
from .geometry import InterfaceGeometry, Projection

MATRIX_TOL = 1e-9
FIT_TOL = 1e-9
PATCH_TOL = 1e-10


def _pts(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    return np.atleast_2d(arr), single


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[:, 1], v[:, 0]], axis=1)


class ReflectionMap:
    """Base class; subclasses implement ``_forward``, ``_jacobian``, ``_inverse``."""

    kind: str = "abstract"

    def __call__(self, x):
        p, single = _pts(x)
        y = self._forward(p)
        return y[0] if single else y

    def jacobian(self, x):
        p, single = _pts(x)
        D = self._jacobian(p)
        return D[0] if single else D

    def J(self, x):
        p, single = _pts(x)
        j = np.abs(np.linalg.det(self._jacobian(p)))
        return float(j[0]) if single else j

    def inverse(self, y):
        p, single = _pts(y)
        x = self._inverse(p)
        return x[0] if single else x

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    def _forward(self, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def _jacobian(self, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def _inverse(self, p):  # pragma: no cover - abstract
        raise NotImplementedError


class NormalReflection(ReflectionMap):
    """Reflection along normals: ``p + s nu -> p - g(s) nu`` with ``g = s (1 + s c)``.

    ``c = beta * curvature`` at the foot point ``p``; ``beta = 0`` gives the
    standard reflection.
    """

    def __init__(self, geometry: InterfaceGeometry, tau: float, beta: float = 0.0):
        self.geometry = geometry
        self.tau = float(tau)
        self.beta = float(beta)
        self.kind = "standard" if beta == 0.0 else "curvature"

    def _project(self, p: np.ndarray) -> Projection:
        proj = self.geometry.project(p)
        reach = np.array([self.geometry.components[i].reach for i in proj.component])
        if np.any(np.abs(proj.signed_distance) >= reach):
            raise OutsideTube("point beyond the reach of the interface")
        return proj

    def _forward(self, p):
        pr = self._project(p)
        s = -pr.signed_distance
        g = s * (1.0 + s * self.beta * pr.curvature)
        return pr.position - g[:, None] * pr.normal

    def _inverse(self, p):
        pr = self._project(p)
        g = pr.signed_distance
        c = self.beta * pr.curvature
        disc = 1.0 + 4.0 * c * g
        if np.any(disc <= 0):
            raise OutsideTube("point outside the image of the curvature reflection")
        s = 2.0 * g / (1.0 + np.sqrt(disc))
        return pr.position + s[:, None] * pr.normal

    def _jacobian(self, p):
        pr = self._project(p)
        s = -pr.signed_distance
        kap = pr.curvature
        c = self.beta * kap
        g = s * (1.0 + s * c)
        g_s = 1.0 + 2.0 * s * c
        g_sig = s * s * self.beta * pr.curvature_slope
        nu = pr.normal
        T = _rot90(nu)
        stretch = 1.0 + s * kap
        tt = ((1.0 - g * kap) / stretch)[:, None, None] * T[:, :, None] * T[:, None, :]
        nt = (g_sig / stretch)[:, None, None] * nu[:, :, None] * T[:, None, :]
        nn = g_s[:, None, None] * nu[:, :, None] * nu[:, None, :]
        return tt - nt - nn

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "tau": self.tau}
        if self.kind == "curvature":
            d["beta"] = self.beta
        return d


class KelvinMap(ReflectionMap):
    """Inversion ``x -> c + r^2 (x - c)/|x - c|^2`` in a circle."""

    kind = "kelvin"

    def __init__(self, center=(0.0, 0.0), radius: float = 1.0):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def _forward(self, p):
        d = p - self.center
        rho2 = np.einsum("ij,ij->i", d, d)
        if np.any(rho2 == 0):
            raise SingularAtCenter("Kelvin transform evaluated at its center")
        return self.center + (self.radius**2 / rho2)[:, None] * d

    _inverse = _forward

    def _jacobian(self, p):
        d = p - self.center
        rho2 = np.einsum("ij,ij->i", d, d)
        if np.any(rho2 == 0):
            raise SingularAtCenter("Kelvin transform evaluated at its center")
        u = d / np.sqrt(rho2)[:, None]
        eye = np.eye(p.shape[1])
        return (self.radius**2 / rho2)[:, None, None] * (eye - 2.0 * u[:, :, None] * u[:, None, :])

    def to_dict(self) -> dict:
        return {"kind": "kelvin", "center": [float(v) for v in self.center], "radius": self.radius}


class PiecewiseReflection(ReflectionMap):
    """One reflection per interface component, chosen by the nearest component."""

    kind = "piecewise"

    def __init__(self, geometry: InterfaceGeometry, parts: Sequence[ReflectionMap]):
        if len(parts) != len(geometry.components):
            raise ValueError("need one reflection per interface component")
        self.geometry = geometry
        self.parts = list(parts)

    def _dispatch(self, p, method: str):
        comp = self.geometry.project(p).component
        out = None
        for i, part in enumerate(self.parts):
            m = comp == i
            if not m.any():
                continue
            val = getattr(part, method)(p[m])
            if out is None:
                out = np.empty((len(p),) + val.shape[1:])
            out[m] = val
        return out

    def _forward(self, p):
        return self._dispatch(p, "_forward")

    def _inverse(self, p):
        return self._dispatch(p, "_inverse")

    def _jacobian(self, p):
        return self._dispatch(p, "_jacobian")

    def to_dict(self) -> dict:
        return {"kind": "piecewise", "parts": [q.to_dict() for q in self.parts]}


class ComposedMap(ReflectionMap):
    """Composition ``outer o inner``."""

    kind = "composite"

    def __init__(self, outer: ReflectionMap, inner: ReflectionMap):
        self.outer = outer
        self.inner = inner

    def _forward(self, p):
        return self.outer._forward(self.inner._forward(p))

    def _inverse(self, p):
        return self.inner._inverse(self.outer._inverse(p))

    def _jacobian(self, p):
        return np.einsum("nij,njk->nik", self.outer._jacobian(self.inner._forward(p)), self.inner._jacobian(p))

    def to_dict(self) -> dict:
        return {"kind": "composite", "outer": self.outer.to_dict(), "inner": self.inner.to_dict()}


def standard_reflection(geometry: InterfaceGeometry, tau: float | None = None) -> NormalReflection:
    """Normal reflection ``p + t nu -> p - t nu`` in a tube of half-width ``tau``."""
    tau = geometry.tau if tau is None else float(tau)
    reach = min(c.reach for c in geometry.components)
    if not 0 < tau < reach:
        raise TubeTooWide(f"tau = {tau} must lie in (0, {reach})")
    return NormalReflection(geometry, tau, 0.0)


def curvature_reflection(geometry: InterfaceGeometry, beta: float, tau: float | None = None) -> NormalReflection:
    """Reflection ``p + t nu -> p - t (1 + t beta kappa) nu`` with ``-1 < beta <= 0``."""
    if not -1.0 < beta <= 0.0:
        raise InvalidBeta(f"beta = {beta} outside (-1, 0]")
    tau = geometry.tau if tau is None else float(tau)
    reach = min(c.reach for c in geometry.components)
    if not 0 < tau < reach:
        raise TubeTooWide(f"tau = {tau} must lie in (0, {reach})")
    kmax = max(float(np.max(np.abs(c.curvature(c.parameter_grid(512))))) for c in geometry.components)
    if 1.0 - tau * abs(beta) * kmax <= 0.5:
        raise TubeTooWide("tube too wide for the curvature reflection (1 + t c <= 1/2)")
    return NormalReflection(geometry, tau, float(beta))


def kelvin_transform(center=(0.0, 0.0), radius: float = 1.0) -> KelvinMap:
    """Kelvin transform with respect to the circle of given center and radius."""
    return KelvinMap(center, radius)


def kelvin_reflection(geometry: InterfaceGeometry) -> ReflectionMap:
    """Kelvin transform about every (circular) component of the interface."""
    parts = []
    for c in geometry.components:
        if not hasattr(c, "radius"):
            raise ValueError("Kelvin reflection needs circular components")
        parts.append(KelvinMap(c.center, c.radius))
    if len(parts) == 1:
        return parts[0]
    return PiecewiseReflection(geometry, parts)


def reflection_from_spec(geometry: InterfaceGeometry, spec: dict | None) -> ReflectionMap:
    """Build a reflection from its configuration dictionary."""
    spec = spec or {"kind": "standard"}
    kind = spec.get("kind", "standard")
    tau = spec.get("tau")
    if kind == "standard":
        return standard_reflection(geometry, tau)
    if kind == "curvature":
        return curvature_reflection(geometry, float(spec["beta"]), tau)
    if kind == "kelvin":
        if "radius" in spec:
            return kelvin_transform(spec.get("center", (0.0, 0.0)), float(spec["radius"]))
        return kelvin_reflection(geometry)
    if kind == "piecewise":
        return PiecewiseReflection(geometry, [reflection_from_spec(geometry, s) for s in spec["parts"]])
    raise ValueError(f"unknown reflection kind {kind!r}")


def pushforward(F: ReflectionMap, A_field, sigma_field, y):
    """Return ``(F*A(y), F*Sigma(y))`` for points ``y`` in the image tube."""
    p, single = _pts(y)
    x = F._inverse(p)
    D = F._jacobian(x)
    J = np.abs(np.linalg.det(D))
    A = np.asarray(A_field(x), dtype=float) if callable(A_field) else np.broadcast_to(A_field, (len(x), 2, 2))
    s = np.asarray(sigma_field(x), dtype=float) if callable(sigma_field) else np.full(len(x), float(sigma_field))
    FA = np.einsum("nij,njk,nlk->nil", D, A, D) / J[:, None, None]
    Fs = s / J
    if single:
        return FA[0], float(Fs[0])
    return FA, Fs


def curvature_gap_spectrum(principal_curvatures: Sequence[float], beta: float) -> np.ndarray:
    """Leading-order eigenvalues of ``(J^{-1} DF^T DF - I)/(2t)`` for the curvature reflection.

    Tangential entries are ``tr - 2 lambda_i - c`` with ``c = beta tr``; the last
    entry is the normal value ``(1 + beta) tr``.
    """
    if not -1.0 < beta < 0.0:
        raise InvalidBeta(f"beta = {beta} outside (-1, 0)")
    lam = np.asarray(principal_curvatures, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("curvatures must be finite")
    tr = lam.sum()
    c = beta * tr
    return np.concatenate([tr - 2.0 * lam - c, [(1.0 + beta) * tr]])


@dataclass
class ConditionVerdict:
    """Outcome of a sufficient-condition check.

    ``tag`` is one of ``Thm0``, ``Thm1``, ``Thm2``, ``Resonant``, ``Unknown``.
    ``exponent`` is alpha (Thm1) or the Sigma exponent (Thm2); ``constant`` is
    the fitted c (minimum over components).  ``alternatives`` names, per
    component, which inequality holds.
    """

    tag: str
    exponent: Optional[float] = None
    constant: Optional[float] = None
    alternatives: list = field(default_factory=list)
    per_component_c: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                return float(v)
            if isinstance(v, np.ndarray):
                return [clean(u) for u in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(u) for u in v]
            if isinstance(v, dict):
                return {k: clean(u) for k, u in v.items()}
            return v

        return clean(
            {
                "tag": self.tag,
                "exponent": self.exponent,
                "constant": self.constant,
                "alternatives": self.alternatives,
                "per_component_c": self.per_component_c,
                "diagnostics": self.diagnostics,
            }
        )


def _tube_data(geometry, F, A_field, sigma_field, n_samples, A_in=None, sigma_in=None):
    tube = geometry.sample_tube("inner", n_samples, getattr(F, "tau", None) or geometry.tau)
    y = tube.points
    dist = np.abs(tube.signed_distance)
    FA, Fs = pushforward(F, A_field, sigma_field, y)
    A = A_in(y) if A_in is not None else A_field(y)
    s = None
    if sigma_field is not None:
        s = sigma_in(y) if sigma_in is not None else sigma_field(y)
    return tube, dist, FA, Fs, A, s


def _medium_fields(medium):
    return medium.A, medium.sigma, medium.A_minus, medium.sigma_in


def verify_thm1(geometry: InterfaceGeometry, F: ReflectionMap, medium, alpha: float, n_samples: int = 400) -> ConditionVerdict:
    """Check ``A - F*A >= c d^alpha`` or ``F*A - A >= c d^alpha`` per tube component."""
    if not 0.0 <= alpha < 2.0:
        raise ValueError("alpha must lie in [0, 2)")
    A_field, s_field, A_in, s_in = _medium_fields(medium)
    tube, dist, FA, _, A, _ = _tube_data(geometry, F, A_field, s_field, n_samples, A_in, s_in)
    diff = FA - A
    lam_fa = np.linalg.eigvalsh(diff)[:, 0]
    lam_af = np.linalg.eigvalsh(-diff)[:, 0]
    w = dist**alpha
    alts, cs = [], []
    for i in range(len(geometry.components)):
        m = tube.component == i
        c_fa = float(np.min(lam_fa[m] / w[m]))
        c_af = float(np.min(lam_af[m] / w[m]))
        if max(c_fa, c_af) > FIT_TOL:
            if c_fa >= c_af:
                alts.append("FA-A")
                cs.append(c_fa)
            else:
                alts.append("A-FA")
                cs.append(c_af)
        else:
            alts.append(None)
            cs.append(max(c_fa, c_af))
    ok = all(a is not None for a in alts)
    diag = {
        "min_eig_FA_minus_A_over_dist": [float(v) for v in lam_fa / w],
        "min_eig_A_minus_FA_over_dist": [float(v) for v in lam_af / w],
    }
    return ConditionVerdict("Thm1" if ok else "Unknown", float(alpha), float(min(cs)), alts, cs, diag)


def verify_thm2(geometry: InterfaceGeometry, F: ReflectionMap, medium, beta_exp: float, n_samples: int = 400) -> ConditionVerdict:
    """Check the two alternatives pairing a semidefinite matrix gap with a Sigma gap."""
    if not beta_exp > 0:
        raise ValueError("beta_exp must be positive")
    A_field, s_field, A_in, s_in = _medium_fields(medium)
    tube, dist, FA, Fs, A, s = _tube_data(geometry, F, A_field, s_field, n_samples, A_in, s_in)
    diff = FA - A
    scale = np.maximum(1.0, np.linalg.norm(A, axis=(1, 2), ord=2))
    eig = np.linalg.eigvalsh(diff)
    fa_ge = eig[:, 0] >= -MATRIX_TOL * scale
    af_ge = eig[:, -1] <= MATRIX_TOL * scale
    w = dist**beta_exp
    g1 = (s - Fs) / w
    g2 = (Fs - s) / w
    alts, cs = [], []
    for i in range(len(geometry.components)):
        m = tube.component == i
        c1 = float(np.min(g1[m])) if fa_ge[m].all() else -np.inf
        c2 = float(np.min(g2[m])) if af_ge[m].all() else -np.inf
        if max(c1, c2) > FIT_TOL:
            alts.append("cond1" if c1 >= c2 else "cond2")
            cs.append(max(c1, c2))
        else:
            alts.append(None)
            cs.append(float(max(c1, c2)) if np.isfinite(max(c1, c2)) else None)
    ok = all(a is not None for a in alts)
    finite = [c for c in cs if c is not None]
    diag = {
        "sigma_gap_over_dist": [float(v) for v in g1],
        "matrix_gap_min_eig": [float(v) for v in eig[:, 0]],
    }
    return ConditionVerdict(
        "Thm2" if ok else "Unknown", float(beta_exp), float(min(finite)) if finite else None, alts, cs, diag
    )


def resonant_patch_test(geometry: InterfaceGeometry, F: ReflectionMap, medium, n_anchors: int = 16,
                        tol: float = PATCH_TOL) -> ConditionVerdict:
    """Look for boundary patches where ``(F*A, F*Sigma) = (A, Sigma)`` within ``tol``."""
    tau = getattr(F, "tau", None) or geometry.tau
    lengths = np.array([c.length for c in geometry.components])
    share = np.maximum(1, np.round(n_anchors * lengths / lengths.sum()).astype(int))
    hits = []
    for i, (c, m) in enumerate(zip(geometry.components, share)):
        sgn = geometry.orientation(i)
        for th in c.parameter_grid(int(m)):
            dth = 0.5 * tau / float(c.speed(th))
            tt, dd = np.meshgrid(np.linspace(-dth, dth, 5), np.linspace(0.1 * tau, 0.6 * tau, 4))
            tt, dd = tt.ravel(), dd.ravel()
            y = c.point(th + tt) - dd[:, None] * sgn * c.normal(th + tt)
            FA, Fs = pushforward(F, medium.A, medium.sigma, y)
            A = medium.A_minus(y)
            s = medium.sigma_in(y)
            errA = np.max(np.linalg.norm(FA - A, axis=(1, 2), ord=2) / np.maximum(1.0, np.linalg.norm(A, axis=(1, 2), ord=2)))
            errS = np.max(np.abs(Fs - s) / np.maximum(1.0, np.abs(s)))
            if errA <= tol and errS <= tol:
                hits.append({"component": i, "anchor": [float(v) for v in c.point(th)]})
    tag = "Resonant" if hits else "Unknown"
    return ConditionVerdict(tag, diagnostics={"matching_patches": hits})


def classify(scenario, n_samples: int = 400) -> ConditionVerdict:
    """Try Thm0, Thm1 (alpha in {0, 1}), Thm2 (beta in {1}) and the resonant patch test in order.

    ``scenario`` needs ``geometry``, ``medium`` and ``reflection`` attributes;
    optional ``alphas`` and ``betas`` override the exponent menus.
    """
    geometry = scenario.geometry
    medium = scenario.medium
    F = scenario.reflection
    rep = check_interface(geometry, lambda x: medium.A_plus(x)[0], lambda x: medium.A_minus(x)[0], 32)
    if rep.thm0_applies:
        margins = [r.margin for r in rep.reports]
        return ConditionVerdict(
            "Thm0",
            constant=float(min(margins)),
            alternatives=list(rep.ordering),
            diagnostics={"min_margin": float(min(margins))},
        )
    for alpha in getattr(scenario, "alphas", (0.0, 1.0)):
        v = verify_thm1(geometry, F, medium, alpha, n_samples)
        if v.tag == "Thm1":
            v.diagnostics = {}
            return v
    for beta in getattr(scenario, "betas", (1.0,)):
        v = verify_thm2(geometry, F, medium, beta, n_samples)
        if v.tag == "Thm2":
            v.diagnostics = {}
            return v
    res = resonant_patch_test(geometry, F, medium)
    if res.tag == "Resonant":
        return res
    return ConditionVerdict("Unknown")
