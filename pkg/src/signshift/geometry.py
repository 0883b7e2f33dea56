"""Interface geometry: circles and ellipses, signed distance, foot points and tubes.

Points inside the sign-changing region ``D`` have positive signed distance.
Normals always point out of ``D``; curvature is positive where ``D`` is
locally convex.  ``D`` is the set of points enclosed by an odd number of
interface components, so nested circles describe annuli.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import AmbiguousProjection, ValidationError

_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


def _as_points(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 2:
        raise ValueError(f"expected 2D points, got shape {arr.shape}")
    return arr, single


@dataclass(frozen=True)
class Circle:
    """Circle with given center and radius."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise ValidationError("circle radius must be positive")

    @property
    def reach(self) -> float:
        return float(self.radius)

    @property
    def length(self) -> float:
        return 2.0 * np.pi * self.radius

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        c = np.asarray(self.center)
        return c + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def normal(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def curvature(self, theta):
        return np.full(np.shape(theta), 1.0 / self.radius)

    def curvature_slope(self, theta):
        """Derivative of curvature with respect to arclength."""
        return np.zeros(np.shape(theta))

    def speed(self, theta):
        return np.full(np.shape(theta), float(self.radius))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) < self.radius**2

    def nearest(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return parameter of the nearest point and unsigned distance."""
        d = pts - np.asarray(self.center)
        rho = np.hypot(d[:, 0], d[:, 1])
        theta = np.arctan2(d[:, 1], d[:, 0])
        return theta, np.abs(rho - self.radius)

    def parameter_grid(self, n: int) -> np.ndarray:
        return 2.0 * np.pi * np.arange(n) / n

    def to_dict(self) -> dict:
        return {"type": "circle", "center": list(self.center), "radius": float(self.radius)}


@dataclass(frozen=True)
class Ellipse:
    """Ellipse with semi-axes ``a >= b`` rotated by ``angle`` about its center."""

    center: tuple[float, float]
    a: float
    b: float
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not (self.a >= self.b > 0):
            raise ValidationError("ellipse requires semi-axes a >= b > 0")

    @property
    def reach(self) -> float:
        return float(self.b**2 / self.a)

    @property
    def length(self) -> float:
        a, b = self.a, self.b
        h = ((a - b) / (a + b)) ** 2
        return float(np.pi * (a + b) * (1 + 3 * h / (10 + np.sqrt(4 - 3 * h))))

    def _rot(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def _local(self, pts: np.ndarray) -> np.ndarray:
        return (pts - np.asarray(self.center)) @ self._rot()

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        loc = np.stack([self.a * np.cos(theta), self.b * np.sin(theta)], axis=-1)
        return np.asarray(self.center) + loc @ self._rot().T

    def normal(self, theta):
        theta = np.asarray(theta, dtype=float)
        loc = np.stack([self.b * np.cos(theta), self.a * np.sin(theta)], axis=-1)
        loc = loc / np.linalg.norm(loc, axis=-1, keepdims=True)
        return loc @ self._rot().T

    def speed(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.sqrt((self.a * np.sin(theta)) ** 2 + (self.b * np.cos(theta)) ** 2)

    def curvature(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.a * self.b / self.speed(theta) ** 3

    def curvature_slope(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = self.a, self.b
        q = self.speed(theta) ** 2
        dk_dtheta = -3.0 * a * b * (a * a - b * b) * np.sin(theta) * np.cos(theta) / q**2.5
        return dk_dtheta / np.sqrt(q)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        loc = self._local(pts)
        return (loc[:, 0] / self.a) ** 2 + (loc[:, 1] / self.b) ** 2 < 1.0

    def nearest(self, pts: np.ndarray, tol: float = 1e-12, max_iter: int = 100):
        """Nearest point by safeguarded Newton on the parametric angle."""
        loc = self._local(pts)
        a, b = self.a, self.b
        grid = 2.0 * np.pi * np.arange(128) / 128
        gx, gy = a * np.cos(grid), b * np.sin(grid)
        d2 = (loc[:, :1] - gx) ** 2 + (loc[:, 1:] - gy) ** 2
        k = np.argmin(d2, axis=1)
        step = 2.0 * np.pi / 128
        lo = grid[k] - step
        hi = grid[k] + step
        th = grid[k].copy()

        def g_and_dg(t):
            px, py = a * np.cos(t), b * np.sin(t)
            tx, ty = -a * np.sin(t), b * np.cos(t)
            rx, ry = px - loc[:, 0], py - loc[:, 1]
            g = rx * tx + ry * ty
            dg = tx * tx + ty * ty - rx * px - ry * py
            return g, dg

        g_lo, _ = g_and_dg(lo)
        for _ in range(max_iter):
            g, dg = g_and_dg(th)
            same = np.sign(g) == np.sign(g_lo)
            lo = np.where(same, th, lo)
            g_lo = np.where(same, g, g_lo)
            hi = np.where(same, hi, th)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = th - g / dg
            ok = (newton > lo) & (newton < hi) & np.isfinite(newton)
            new = np.where(ok, newton, 0.5 * (lo + hi))
            done = np.abs(new - th) <= tol * (1.0 + np.abs(th))
            th = new
            if np.all(done):
                break
        th = np.mod(th, 2.0 * np.pi)
        px, py = a * np.cos(th), b * np.sin(th)
        dist = np.hypot(px - loc[:, 0], py - loc[:, 1])
        return th, dist

    def parameter_grid(self, n: int) -> np.ndarray:
        return 2.0 * np.pi * np.arange(n) / n

    def to_dict(self) -> dict:
        return {
            "type": "ellipse",
            "center": list(self.center),
            "a": float(self.a),
            "b": float(self.b),
            "angle": float(self.angle),
        }


ClosedCurve = Union[Circle, Ellipse]


def curve_from_dict(spec: dict) -> ClosedCurve:
    kind = spec.get("type", "circle")
    center = tuple(spec.get("center", (0.0, 0.0)))
    if kind == "circle":
        return Circle(center, float(spec["radius"]))
    if kind == "ellipse":
        return Ellipse(center, float(spec["a"]), float(spec["b"]), float(spec.get("angle", 0.0)))
    raise ValidationError(f"unknown curve type {kind!r}")


@dataclass(frozen=True)
class BoundaryPoint:
    """Point on the interface with outward (from D) normal and signed curvature."""

    component: int
    parameter: float
    position: np.ndarray
    normal: np.ndarray
    curvature: float


@dataclass(frozen=True)
class Projection:
    """Vectorized foot-point data for an array of points."""

    component: np.ndarray
    parameter: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray
    curvature_slope: np.ndarray
    signed_distance: np.ndarray


@dataclass(frozen=True)
class TubeSample:
    """Samples of a one-sided tube around the interface."""

    points: np.ndarray
    signed_distance: np.ndarray
    component: np.ndarray

    def __len__(self) -> int:
        return len(self.signed_distance)

    def __iter__(self):
        return iter(zip(self.points, self.signed_distance))


@dataclass(frozen=True)
class InterfaceGeometry:
    """Union of disjoint simple closed curves with a tube half-width ``tau``."""

    components: tuple
    tube_half_width: float
    _orientation: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValidationError("geometry needs at least one component")
        object.__setattr__(self, "components", comps)
        tau = float(self.tube_half_width)
        object.__setattr__(self, "tube_half_width", tau)
        if not tau > 0:
            raise ValidationError("tube half-width must be positive")
        reach = min(c.reach for c in comps)
        if tau >= reach:
            raise ValidationError(f"tube half-width {tau} must be below the reach {reach}")
        depth = []
        for i, ci in enumerate(comps):
            pi = ci.point(ci.parameter_grid(256))
            d = 0
            for j, cj in enumerate(comps):
                if i == j:
                    continue
                inside = cj.contains(pi)
                if inside.any() and not inside.all():
                    raise ValidationError(f"components {i} and {j} intersect")
                _, dist = cj.nearest(pi)
                if dist.min() <= 2 * tau:
                    raise ValidationError(f"tubes of components {i} and {j} overlap")
                d += int(inside.all())
            depth.append(d)
        # +1 when the curve's own outward normal also points out of D
        object.__setattr__(self, "_orientation", tuple(1.0 if d % 2 == 0 else -1.0 for d in depth))

    @property
    def tau(self) -> float:
        return self.tube_half_width

    def orientation(self, i: int) -> float:
        return self._orientation[i]

    def inside(self, x) -> np.ndarray:
        pts, single = _as_points(x)
        count = np.zeros(len(pts), dtype=int)
        for c in self.components:
            count += c.contains(pts)
        res = count % 2 == 1
        return bool(res[0]) if single else res

    def project(self, x) -> Projection:
        pts, _ = _as_points(x)
        n = len(pts)
        best = np.full(n, np.inf)
        comp = np.zeros(n, dtype=int)
        param = np.zeros(n)
        for i, c in enumerate(self.components):
            th, dist = c.nearest(pts)
            better = dist < best
            best = np.where(better, dist, best)
            comp = np.where(better, i, comp)
            param = np.where(better, th, param)
        pos = np.empty((n, 2))
        nrm = np.empty((n, 2))
        kap = np.empty(n)
        dkap = np.empty(n)
        for i, c in enumerate(self.components):
            m = comp == i
            if not m.any():
                continue
            s = self._orientation[i]
            pos[m] = c.point(param[m])
            nrm[m] = s * c.normal(param[m])
            kap[m] = s * c.curvature(param[m])
            dkap[m] = c.curvature_slope(param[m])
        sign = np.where(self.inside(pts), 1.0, -1.0)
        return Projection(comp, param, pos, nrm, kap, dkap, sign * best)

    def signed_distance(self, x):
        pts, single = _as_points(x)
        sd = self.project(pts).signed_distance
        return float(sd[0]) if single else sd

    def foot_point(self, x) -> BoundaryPoint:
        pts, _ = _as_points(x)
        if len(pts) != 1:
            raise ValueError("foot_point expects a single point")
        p = self.project(pts)
        i = int(p.component[0])
        if abs(p.signed_distance[0]) >= self.components[i].reach:
            raise AmbiguousProjection(
                f"distance {abs(p.signed_distance[0]):.3g} exceeds reach {self.components[i].reach:.3g}"
            )
        return BoundaryPoint(
            component=i,
            parameter=float(p.parameter[0]),
            position=p.position[0],
            normal=p.normal[0],
            curvature=float(p.curvature[0]),
        )

    def boundary_points(self, n_per_component: int) -> list[BoundaryPoint]:
        out = []
        for i, c in enumerate(self.components):
            s = self._orientation[i]
            for th in c.parameter_grid(n_per_component):
                out.append(
                    BoundaryPoint(
                        component=i,
                        parameter=float(th),
                        position=c.point(th),
                        normal=s * c.normal(th),
                        curvature=float(s * c.curvature(th)),
                    )
                )
        return out

    def sample_tube(self, side: str, n_points: int, tau: float | None = None) -> TubeSample:
        """Deterministic quasi-uniform samples of the inner or outer tube.

        At least 10% of samples lie within ``tau/10`` of the interface.
        """
        if side not in ("inner", "outer"):
            raise ValueError("side must be 'inner' or 'outer'")
        if n_points < 1:
            raise ValueError("n_points must be >= 1")
        tau = self.tau if tau is None else float(tau)
        lengths = np.array([c.length for c in self.components])
        share = np.floor(n_points * lengths / lengths.sum()).astype(int)
        share[np.argmax(lengths)] += n_points - share.sum()
        sgn = 1.0 if side == "inner" else -1.0
        pts, sds, comps = [], [], []
        for i, (c, m) in enumerate(zip(self.components, share)):
            if m == 0:
                continue
            j = np.arange(m)
            theta = 2.0 * np.pi * np.mod(0.5 + j * _GOLDEN, 1.0)
            n_near = max(1, int(np.ceil(0.15 * m)))
            t = np.where(
                j < n_near,
                tau / 10.0 * (j + 0.5) / n_near,
                tau / 10.0 + 0.9 * tau * (j - n_near + 0.5) / max(m - n_near, 1),
            )
            nrm = self._orientation[i] * c.normal(theta)
            p = c.point(theta) - sgn * t[:, None] * nrm
            pts.append(p)
            sds.append(sgn * t)
            comps.append(np.full(m, i))
        return TubeSample(np.vstack(pts), np.concatenate(sds), np.concatenate(comps))

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components], "tau": self.tau}


def make_geometry(components: Sequence[ClosedCurve | dict], tau: float) -> InterfaceGeometry:
    comps = tuple(c if isinstance(c, (Circle, Ellipse)) else curve_from_dict(c) for c in components)
    return InterfaceGeometry(comps, tau)


def signed_distance(geometry: InterfaceGeometry, x):
    """Signed distance to the interface, positive inside ``D``."""
    return geometry.signed_distance(x)


def foot_point(geometry: InterfaceGeometry, x) -> BoundaryPoint:
    """Unique nearest interface point of ``x``."""
    return geometry.foot_point(x)


def sample_tube(geometry: InterfaceGeometry, side: str, n_points: int) -> TubeSample:
    """Quasi-uniform samples of the inner or outer tube."""
    return geometry.sample_tube(side, n_points)
