"""Algebraic test of the complementing condition for second-order transmission problems.

For coefficient matrices ``A1``, ``A2`` and a unit normal ``e`` the condition
holds iff the quadratic form ``xi -> Delta_2(xi) - Delta_1(xi)`` with

    Delta_j(xi) = <A_j e, e><A_j xi, xi> - <A_j e, xi>^2

has no nontrivial zero on the hyperplane orthogonal to ``e``.  The form is
reduced to a ``(d-1) x (d-1)`` symmetric matrix whose eigenvalues decide the
verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import DimensionMismatch, FieldEvaluation, NotPositiveDefinite, NotTangent

MatrixField = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]

REL_TOL = 1e-9


def as_sym_matrix(A, require_pd: bool = True, name: str = "A") -> np.ndarray:
    """Validate and return a real symmetric matrix.

    Parameters
    ----------
    A : array_like
        Square matrix; a scalar is promoted to a 1x1 matrix.
    require_pd : bool
        If true, raise :class:`NotPositiveDefinite` unless every eigenvalue is
        strictly positive.
    """
    M = np.atleast_2d(np.asarray(A, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    if M.shape[0] < 2:
        raise DimensionMismatch(f"{name} must have dimension >= 2")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    asym = np.max(np.abs(M - M.T))
    if asym > 1e-12 * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3g})")
    M = 0.5 * (M + M.T)
    if require_pd and np.linalg.eigvalsh(M)[0] <= 0:
        raise NotPositiveDefinite(f"{name} is not positive definite")
    return M


def _unit(e) -> np.ndarray:
    e = np.asarray(e, dtype=float).ravel()
    n = np.linalg.norm(e)
    if abs(n - 1.0) > 1e-10:
        raise ValueError(f"normal must be a unit vector (|e| = {n})")
    return e / n


def delta_form(A, e, xi) -> float:
    """Return ``<Ae,e><A xi,xi> - <Ae,xi>^2``."""
    A = np.asarray(A, dtype=float)
    e = np.asarray(e, dtype=float)
    xi = np.asarray(xi, dtype=float)
    Ae = A @ e
    return float((e @ Ae) * (xi @ A @ xi) - (Ae @ xi) ** 2)


def decay_exponent(A, e, xi) -> complex:
    """Exponent ``eta`` of the bounded half-space mode ``exp(eta t)``.

    Solves ``a eta^2 + 2 i b eta - c = 0`` with ``a = <Ae,e>``,
    ``b = <A xi,e>``, ``c = <A xi,xi>`` and keeps the root with negative real part.
    """
    A = as_sym_matrix(A)
    e = _unit(e)
    xi = np.asarray(xi, dtype=float).ravel()
    nx = np.linalg.norm(xi)
    if nx == 0:
        raise ValueError("xi must be nonzero")
    if abs(xi @ e) > 1e-12 * max(1.0, nx):
        raise NotTangent(f"<xi, e> = {xi @ e:.3g} is not zero")
    a = e @ A @ e
    b = xi @ A @ e
    c = xi @ A @ xi
    disc = a * c - b * b
    return complex((-1j * b - np.sqrt(disc)) / a)


def tangent_basis(e: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to ``e`` as columns."""
    d = len(e)
    Q, _ = np.linalg.qr(np.column_stack([e, np.eye(d)]))
    return Q[:, 1:d]


@dataclass
class ComplementingReport:
    """Outcome of :func:`check_pair`."""

    holds: bool
    reduced_form: np.ndarray
    eigenvalues: np.ndarray
    witness: Optional[np.ndarray]
    margin: float
    basis: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "holds": bool(self.holds),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "margin": float(self.margin),
            "witness": None if self.witness is None else [float(v) for v in self.witness],
        }


def reduced_form(A1: np.ndarray, A2: np.ndarray, e: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Matrix of ``Delta_2 - Delta_1`` on the tangent hyperplane via polarization."""

    def q(x):
        return delta_form(A2, e, x) - delta_form(A1, e, x)

    m = basis.shape[1]
    diag = np.array([q(basis[:, i]) for i in range(m)])
    M = np.diag(diag)
    for i in range(m):
        for j in range(i + 1, m):
            v = 0.5 * (q(basis[:, i] + basis[:, j]) - diag[i] - diag[j])
            M[i, j] = M[j, i] = v
    return M


def check_pair(A1, A2, e) -> ComplementingReport:
    """Decide the complementing condition for ``(A1, A2)`` across normal ``e``."""
    A1 = as_sym_matrix(A1, name="A1")
    A2 = as_sym_matrix(A2, name="A2")
    e = np.asarray(e, dtype=float).ravel()
    if A1.shape != A2.shape or A1.shape[0] != len(e):
        raise DimensionMismatch(f"shapes {A1.shape}, {A2.shape} and normal of length {len(e)} differ")
    e = _unit(e)
    basis = tangent_basis(e)
    M = reduced_form(A1, A2, e, basis)
    eig, vec = np.linalg.eigh(M)
    scale = np.max(np.abs(eig))
    tol = REL_TOL * max(1.0, scale)
    small = np.min(np.abs(eig))
    definite = bool(np.all(eig > 0) or np.all(eig < 0))
    holds = bool(small > tol and definite)
    witness = None
    if not holds:
        pos = np.flatnonzero(eig > tol)
        neg = np.flatnonzero(eig < -tol)
        if small <= tol or len(pos) == 0 or len(neg) == 0:
            v = vec[:, np.argmin(np.abs(eig))]
        else:
            # zero of the form on the segment between opposite-sign eigenvectors
            lp, ln = eig[pos[-1]], eig[neg[0]]
            v = np.sqrt(-ln) * vec[:, pos[-1]] + np.sqrt(lp) * vec[:, neg[0]]
            v = v / np.linalg.norm(v)
        witness = basis @ v
    margin = float(small / (np.linalg.norm(A1, 2) + np.linalg.norm(A2, 2)) ** 2)
    return ComplementingReport(holds, M, eig, witness, margin, basis)


def _evaluate(field_: MatrixField, x: np.ndarray) -> np.ndarray:
    if callable(field_):
        try:
            return np.asarray(field_(x), dtype=float)
        except Exception as exc:  # noqa: BLE001
            raise FieldEvaluation(f"coefficient field failed at {x}: {exc}") from exc
    return np.asarray(field_, dtype=float)


@dataclass
class InterfaceReport:
    """Per-sample complementing reports along the interface."""

    points: list
    reports: list
    thm0_applies: bool
    ordering: list
    margin_tol: float

    @property
    def verdict(self) -> str:
        return "Thm0Applies" if self.thm0_applies else "Fails"

    @property
    def failing(self) -> list[int]:
        return [i for i, r in enumerate(self.reports) if not (r.holds and r.margin > self.margin_tol)]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "ordering": list(self.ordering),
            "samples": [
                {
                    "component": bp.component,
                    "position": [float(v) for v in bp.position],
                    "normal": [float(v) for v in bp.normal],
                    **rep.to_dict(),
                }
                for bp, rep in zip(self.points, self.reports)
            ],
        }


def check_interface(geometry, A_plus: MatrixField, A_minus: MatrixField, n_samples: int = 32,
                    margin_tol: float = 1e-9) -> InterfaceReport:
    """Apply :func:`check_pair` at boundary samples of every interface component.

    ``A_plus`` is the coefficient outside ``D`` and ``A_minus`` inside.  The
    ``ordering`` entry per component is ``"plus>minus"``, ``"minus>plus"`` or
    ``None`` when neither strict ordering holds at every sample.
    """
    if n_samples < 8:
        raise ValueError("n_samples must be >= 8 per component")
    pts = geometry.boundary_points(n_samples)
    reports = []
    orders: dict[int, set] = {}
    for bp in pts:
        Ap = _evaluate(A_plus, bp.position)
        Am = _evaluate(A_minus, bp.position)
        reports.append(check_pair(Ap, Am, bp.normal))
        lam = np.linalg.eigvalsh(as_sym_matrix(Ap) - as_sym_matrix(Am))
        tag = "plus>minus" if lam[0] > 0 else ("minus>plus" if lam[-1] < 0 else None)
        orders.setdefault(bp.component, set()).add(tag)
    ordering = []
    for i in range(len(geometry.components)):
        tags = orders.get(i, {None})
        ordering.append(next(iter(tags)) if len(tags) == 1 else None)
    ok = all(r.holds and r.margin > margin_tol for r in reports)
    return InterfaceReport(pts, reports, ok, ordering, margin_tol)
