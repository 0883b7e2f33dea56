"""Piecewise coefficient fields ``A(x)`` and ``Sigma(x)`` of a sign-changing medium."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ValidationError
from .geometry import InterfaceGeometry


def _pts(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class MatrixCoefficient:
    """Matrix-valued coefficient.

    ``kind`` is ``"constant"`` (fixed 2x2 matrix) or ``"frame"`` (eigenvalues
    ``normal`` along ``(x - center)/|x - center|`` and ``tangent`` across it).
    """

    kind: str
    matrix: tuple = ((1.0, 0.0), (0.0, 1.0))
    normal: float = 1.0
    tangent: float = 1.0
    center: tuple = (0.0, 0.0)

    @classmethod
    def from_spec(cls, spec: Any) -> "MatrixCoefficient":
        if isinstance(spec, (int, float)):
            return cls("constant", ((float(spec), 0.0), (0.0, float(spec))))
        if isinstance(spec, (list, tuple)):
            M = np.asarray(spec, dtype=float)
            if M.shape != (2, 2) or not np.allclose(M, M.T, atol=1e-14):
                raise ValidationError("matrix coefficient must be a symmetric 2x2 list")
            if np.linalg.eigvalsh(M)[0] <= 0:
                raise ValidationError("matrix coefficient must be positive definite")
            return cls("constant", tuple(map(tuple, M.tolist())))
        if isinstance(spec, dict):
            kind = spec.get("kind", "isotropic")
            if kind == "isotropic":
                return cls.from_spec(float(spec["value"]))
            if kind == "frame":
                n, t = float(spec["normal"]), float(spec["tangent"])
                if n <= 0 or t <= 0:
                    raise ValidationError("frame coefficient eigenvalues must be positive")
                return cls("frame", normal=n, tangent=t, center=tuple(spec.get("center", (0.0, 0.0))))
        raise ValidationError(f"cannot parse matrix coefficient {spec!r}")

    def to_spec(self) -> Any:
        if self.kind == "constant":
            return [list(r) for r in self.matrix]
        return {"kind": "frame", "normal": self.normal, "tangent": self.tangent, "center": list(self.center)}

    @property
    def isotropic_value(self) -> float | None:
        if self.kind == "constant":
            M = np.asarray(self.matrix)
            if M[0, 1] == 0 and M[0, 0] == M[1, 1]:
                return float(M[0, 0])
            return None
        return self.normal if self.normal == self.tangent else None

    def __call__(self, x) -> np.ndarray:
        p = _pts(x)
        if self.kind == "constant":
            return np.broadcast_to(np.asarray(self.matrix), (len(p), 2, 2)).copy()
        d = p - np.asarray(self.center)
        r = np.hypot(d[:, 0], d[:, 1])
        r = np.where(r == 0, 1.0, r)
        u = d / r[:, None]
        v = np.stack([-u[:, 1], u[:, 0]], axis=1)
        return self.normal * u[:, :, None] * u[:, None, :] + self.tangent * v[:, :, None] * v[:, None, :]


@dataclass(frozen=True)
class ScalarCoefficient:
    """Scalar coefficient: ``"constant"`` or ``"kelvin"`` (``radius^4/|x-center|^4``)."""

    kind: str
    value: float = 1.0
    radius: float = 1.0
    center: tuple = (0.0, 0.0)

    @classmethod
    def from_spec(cls, spec: Any) -> "ScalarCoefficient":
        if isinstance(spec, (int, float)):
            return cls("constant", value=float(spec))
        if isinstance(spec, dict):
            kind = spec.get("kind", "constant")
            if kind == "constant":
                return cls("constant", value=float(spec["value"]))
            if kind == "kelvin":
                r = float(spec["radius"])
                if r <= 0:
                    raise ValidationError("kelvin radius must be positive")
                return cls("kelvin", radius=r, center=tuple(spec.get("center", (0.0, 0.0))))
        raise ValidationError(f"cannot parse scalar coefficient {spec!r}")

    def to_spec(self) -> Any:
        if self.kind == "constant":
            return self.value
        return {"kind": "kelvin", "radius": self.radius, "center": list(self.center)}

    def __call__(self, x) -> np.ndarray:
        p = _pts(x)
        if self.kind == "constant":
            return np.full(len(p), self.value)
        d = p - np.asarray(self.center)
        rho2 = np.einsum("ij,ij->i", d, d)
        return self.radius**4 / rho2**2

    def radial(self, r: np.ndarray) -> np.ndarray:
        """Profile along the positive x-axis; exact for origin-centered fields."""
        r = np.asarray(r, dtype=float)
        return self(np.stack([r, np.zeros_like(r)], axis=-1))


@dataclass(frozen=True)
class Medium:
    """Coefficients of the sign-changing problem.

    Inside ``D`` the principal coefficient is ``s_delta A`` with
    ``s_delta = -1 - i delta`` and the zeroth-order term is ``-k^2 Sigma + i delta``;
    outside ``D`` they are ``A`` and ``k^2 Sigma + i delta``.
    """

    geometry: InterfaceGeometry
    k: float
    R0: float
    A_in: MatrixCoefficient
    A_out: MatrixCoefficient
    sigma_in: ScalarCoefficient
    sigma_out: ScalarCoefficient

    def A_plus(self, x) -> np.ndarray:
        return self.A_out(x)

    def A_minus(self, x) -> np.ndarray:
        return self.A_in(x)

    def A(self, x, inside=None) -> np.ndarray:
        p = _pts(x)
        ins = self.geometry.inside(p) if inside is None else np.asarray(inside, dtype=bool)
        return np.where(ins[:, None, None], self.A_in(p), self.A_out(p))

    def sigma(self, x, inside=None) -> np.ndarray:
        p = _pts(x)
        ins = self.geometry.inside(p) if inside is None else np.asarray(inside, dtype=bool)
        return np.where(ins, self.sigma_in(p), self.sigma_out(p))

    def s0(self, x, inside=None) -> np.ndarray:
        p = _pts(x)
        ins = self.geometry.inside(p) if inside is None else np.asarray(inside, dtype=bool)
        return np.where(ins, -1.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "R0": self.R0,
            "inside": {"A": self.A_in.to_spec(), "sigma": self.sigma_in.to_spec()},
            "outside": {"A": self.A_out.to_spec(), "sigma": self.sigma_out.to_spec()},
        }
