"""Piecewise-linear finite elements for the lossy sign-changing Helmholtz problem in 2D.

The discrete problem is ``K u = b`` with

    K = -S[p A] + M[k^2 s0 Sigma + i delta] + B,   b_i = int f phi_i,

where ``p = s_delta`` (``-1 - i delta`` inside ``D``), ``S`` is the stiffness
matrix, ``M`` a weighted mass matrix and ``B`` the outgoing boundary closure on
the circle ``r = R`` (truncated modal Dirichlet-to-Neumann map or first-order
absorbing condition).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import BadResolution, InconsistentMesh, OutsideTube, SingularSystem

INTERIOR, INTERFACE, OUTER = 0, 1, 2

# degree-2 interior rule on the reference triangle (barycentric coordinates)
_QB = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_QW = np.array([1 / 3, 1 / 3, 1 / 3])


@dataclass
class Mesh:
    """Triangular mesh with vertex markers and per-triangle region tags (1 = inside D)."""

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_marker: np.ndarray
    region: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.vertex_marker = np.asarray(self.vertex_marker, dtype=np.int64)
        self.region = np.asarray(self.region, dtype=np.int64)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def _geom(self):
        if "geom" not in self._cache:
            P = self.vertices[self.triangles]
            e1 = P[:, 1] - P[:, 0]
            e2 = P[:, 2] - P[:, 0]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            area = 0.5 * det
            # gradients of barycentric functions: rot(opposite edge) / (2 area)
            opp = np.stack([P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]], axis=1)
            grads = np.stack([-opp[:, :, 1], opp[:, :, 0]], axis=2) / det[:, None, None]
            self._cache["geom"] = (area, grads)
        return self._cache["geom"]

    @property
    def areas(self) -> np.ndarray:
        return self._geom()[0]

    @property
    def gradients(self) -> np.ndarray:
        """Array ``(M, 3, 2)`` of barycentric gradients."""
        return self._geom()[1]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def quadrature_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Points ``(M, 3, 2)`` and weights ``(M, 3)`` of the degree-2 rule."""
        P = self.vertices[self.triangles]
        pts = np.einsum("qa,mad->mqd", _QB, P)
        w = self.areas[:, None] * _QW[None, :]
        return pts, w

    def quality(self) -> np.ndarray:
        """``2 * inradius / circumradius`` per triangle (1 for equilateral)."""
        P = self.vertices[self.triangles]
        a = np.linalg.norm(P[:, 1] - P[:, 2], axis=1)
        b = np.linalg.norm(P[:, 0] - P[:, 2], axis=1)
        c = np.linalg.norm(P[:, 0] - P[:, 1], axis=1)
        area = np.abs(self.areas)
        s = 0.5 * (a + b + c)
        r_in = area / s
        r_circ = a * b * c / (4.0 * area)
        return 2.0 * r_in / r_circ

    def boundary_nodes(self) -> np.ndarray:
        """Outer boundary vertices sorted by angle."""
        idx = np.flatnonzero(self.vertex_marker == OUTER)
        th = np.mod(np.arctan2(self.vertices[idx, 1], self.vertices[idx, 0]), 2 * np.pi)
        return idx[np.argsort(th, kind="stable")]

    def interface_edges(self) -> np.ndarray:
        """Edges between an inside and an outside triangle as rows ``(v0, v1, t_in, t_out)``."""
        if "iface" not in self._cache:
            T = self.triangles
            edges = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
            owner = np.tile(np.arange(len(T)), 3)
            key = np.sort(edges, axis=1)
            order = np.lexsort((key[:, 1], key[:, 0]))
            key, owner = key[order], owner[order]
            same = np.all(key[1:] == key[:-1], axis=1)
            i = np.flatnonzero(same)
            t0, t1 = owner[i], owner[i + 1]
            diff = self.region[t0] != self.region[t1]
            t0, t1, e = t0[diff], t1[diff], key[i[diff]]
            t_in = np.where(self.region[t0] == 1, t0, t1)
            t_out = np.where(self.region[t0] == 1, t1, t0)
            self._cache["iface"] = np.column_stack([e, t_in, t_out])
        return self._cache["iface"]

    def locate(self, pts: np.ndarray, allowed: Optional[np.ndarray] = None, tol: float = 0.05):
        """Containing triangle and barycentric coordinates of each point.

        Only triangles with ``allowed[t]`` true are considered.  Points slightly
        outside every allowed triangle (by at most ``tol`` in barycentric terms)
        are extrapolated from the best candidate; farther points raise
        :class:`OutsideTube`.
        """
        key = "tree" if allowed is None else ("tree", allowed.tobytes())
        if key not in self._cache:
            ids = np.arange(self.n_triangles) if allowed is None else np.flatnonzero(allowed)
            self._cache[key] = (cKDTree(self.centroids[ids]), ids)
        tree, ids = self._cache[key]
        kq = min(16, len(ids))
        _, cand = tree.query(pts, k=kq)
        cand = ids[np.atleast_2d(cand).reshape(len(pts), kq)]
        P = self.vertices[self.triangles[cand]]  # (n, k, 3, 2)
        v0 = P[:, :, 1] - P[:, :, 0]
        v1 = P[:, :, 2] - P[:, :, 0]
        v2 = pts[:, None, :] - P[:, :, 0]
        det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
        l1 = (v2[..., 0] * v1[..., 1] - v2[..., 1] * v1[..., 0]) / det
        l2 = (v0[..., 0] * v2[..., 1] - v0[..., 1] * v2[..., 0]) / det
        lam = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        score = lam.min(axis=-1)
        best = np.argmax(score, axis=1)
        rows = np.arange(len(pts))
        if np.any(score[rows, best] < -tol):
            raise OutsideTube("pull-back point left the mesh")
        return cand[rows, best], lam[rows, best]

    def write(self, path) -> None:
        """Write the plain-text mesh format."""
        buf = io.StringIO()
        buf.write(f"vertices {self.n_vertices} triangles {self.n_triangles}\n")
        for (x, y), m in zip(self.vertices, self.vertex_marker):
            buf.write(f"{float(x)!r} {float(y)!r} {int(m)}\n")
        for (i, j, k), r in zip(self.triangles, self.region):
            buf.write(f"{int(i)} {int(j)} {int(k)} {int(r)}\n")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def read(cls, path) -> "Mesh":
        with open(path, encoding="utf-8") as fh:
            head = fh.readline().split()
            if len(head) != 4 or head[0] != "vertices" or head[2] != "triangles":
                raise InconsistentMesh("bad mesh header")
            nv, nt = int(head[1]), int(head[3])
            V = np.loadtxt(fh, max_rows=nv, ndmin=2)
            T = np.loadtxt(fh, max_rows=nt, ndmin=2, dtype=np.int64)
        return cls(V[:, :2], T[:, :3], V[:, 2].astype(np.int64), T[:, 3])


def _ring_counts(rho: np.ndarray, spacing: np.ndarray, n_angular: int) -> np.ndarray:
    counts = np.empty(len(rho), dtype=np.int64)
    for j, (r, h) in enumerate(zip(rho, spacing)):
        m = n_angular
        while m % 2 == 0 and m >= 16 and 2 * np.pi * r / m < 0.5 * h:
            m //= 2
        counts[j] = m
    # non-decreasing outward with at most a factor of two between rings
    for j in range(len(counts) - 2, -1, -1):
        counts[j] = min(counts[j], counts[j + 1])
    for j in range(1, len(counts)):
        while counts[j] > 2 * counts[j - 1]:
            counts[j - 1] *= 2
    for j in range(len(counts) - 2, -1, -1):
        counts[j] = min(counts[j], counts[j + 1])
    return counts


def build_polar_mesh(radii: Sequence[float], R: float, n_angular: int,
                     n_radial_per_band: Optional[Sequence[int] | int] = None,
                     extra_rings: Sequence[float] = ()) -> Mesh:
    """Structured polar mesh whose rings include every interface radius.

    Triangles between two rings with the same angular count are quads split
    along one diagonal; toward the origin the count halves whenever the arc
    spacing falls below half the radial spacing, keeping triangle quality
    bounded.  Region tags follow the parity of the number of interface circles
    enclosing a triangle centroid.  ``extra_rings`` adds further exact vertex
    rings (for instance the boundaries of observation annuli) without changing
    the region tags.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])) or any(r <= 0 for r in radii):
        raise BadResolution("radii must be positive and strictly increasing")
    if radii and radii[-1] >= R:
        raise BadResolution("radii must be below R")
    if n_angular < 16:
        raise BadResolution("n_angular must be >= 16")
    extras = sorted({float(r) for r in extra_rings if 0 < r < R and r not in radii})
    breaks = [0.0] + sorted(radii + extras) + [float(R)]
    ref = radii[-1] if radii else R
    h_target = 2.0 * np.pi * ref / n_angular
    if n_radial_per_band is None:
        n_bands = [max(1, int(math.ceil((b - a) / h_target - 1e-9))) for a, b in zip(breaks, breaks[1:])]
    elif isinstance(n_radial_per_band, (int, np.integer)):
        n_bands = [int(n_radial_per_band)] * (len(breaks) - 1)
    else:
        n_bands = [int(v) for v in n_radial_per_band]
    if len(n_bands) != len(breaks) - 1 or min(n_bands) < 1:
        raise BadResolution("need a positive ring count for every band")
    rho, spacing, marker = [], [], []
    for bi, (a, b) in enumerate(zip(breaks, breaks[1:])):
        n = n_bands[bi]
        h = (b - a) / n
        for j in range(1, n + 1):
            rho.append(a + j * h)
            spacing.append(h)
            if j == n and bi == len(breaks) - 2:
                marker.append(OUTER)
            elif j == n and b in radii:
                marker.append(INTERFACE)
            else:
                marker.append(INTERIOR)
    rho = np.array(rho)
    counts = _ring_counts(rho, np.array(spacing), n_angular)
    counts[0] = max(counts[0], 8)
    for j in range(1, len(counts)):
        counts[j] = max(counts[j], counts[j - 1])
    verts = [np.zeros((1, 2))]
    marks = [np.array([INTERIOR])]
    starts = []
    off = 1
    for r, m, mk in zip(rho, counts, marker):
        th = 2.0 * np.pi * np.arange(m) / m
        pts = r * np.column_stack([np.cos(th), np.sin(th)])
        if mk in (INTERFACE, OUTER):
            pts = pts * (r / np.hypot(pts[:, 0], pts[:, 1]))[:, None]
        verts.append(pts)
        marks.append(np.full(m, mk))
        starts.append(off)
        off += m
    tris = []
    m0, s0 = counts[0], starts[0]
    i = np.arange(m0)
    tris.append(np.column_stack([np.zeros(m0, dtype=np.int64), s0 + i, s0 + (i + 1) % m0]))
    for j in range(len(rho) - 1):
        mi, mo = counts[j], counts[j + 1]
        si, so = starts[j], starts[j + 1]
        i = np.arange(mi)
        if mo == mi:
            a0, a1 = si + i, si + (i + 1) % mi
            b0, b1 = so + i, so + (i + 1) % mo
            tris.append(np.column_stack([a0, b0, b1]))
            tris.append(np.column_stack([a0, b1, a1]))
        elif mo == 2 * mi:
            a0, a1 = si + i, si + (i + 1) % mi
            b0, bm, b1 = so + 2 * i, so + 2 * i + 1, so + (2 * i + 2) % mo
            tris.append(np.column_stack([a0, b0, bm]))
            tris.append(np.column_stack([a0, bm, a1]))
            tris.append(np.column_stack([a1, bm, b1]))
        else:  # pragma: no cover - guarded by _ring_counts
            raise BadResolution("ring counts must match or double")
    V = np.vstack(verts)
    T = np.vstack(tris).astype(np.int64)
    P = V[T]
    det = (P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0])
    flip = det < 0
    T[flip] = T[flip][:, [0, 2, 1]]
    rc = np.hypot(*V[T].mean(axis=1).T)
    enclosing = np.sum(np.asarray(radii)[None, :] > rc[:, None], axis=1) if radii else np.zeros(len(T), int)
    region = (enclosing % 2 == 1).astype(np.int64)
    return Mesh(V, T, np.concatenate(marks), region)


# ---------------------------------------------------------------------------
# assembly


def _sym_from_local(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, n: int) -> sps.csc_matrix:
    """Assemble keeping only ``i <= j`` and mirror, so the result is exactly symmetric."""
    up = rows < cols
    dg = rows == cols
    U = sps.coo_matrix((vals[up], (rows[up], cols[up])), shape=(n, n)).tocsr()
    D = sps.coo_matrix((vals[dg], (rows[dg], cols[dg])), shape=(n, n)).tocsr()
    return (U + U.T + D).tocsc()


def stiffness_matrix(mesh: Mesh, coef: np.ndarray) -> sps.csc_matrix:
    """``S_ij = int (C grad phi_j) . grad phi_i`` with one 2x2 (complex) matrix ``C`` per triangle."""
    G = mesh.gradients
    loc = np.einsum("mad,mde,mbe->mab", G, coef, G) * mesh.areas[:, None, None]
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    return _sym_from_local(rows, cols, loc.reshape(-1), mesh.n_vertices)


def mass_matrix(mesh: Mesh, coef_q: Optional[np.ndarray] = None) -> sps.csc_matrix:
    """``M_ij = int c phi_j phi_i`` with ``c`` given at the quadrature points ``(M, 3)``."""
    _, w = mesh.quadrature_points()
    c = np.ones_like(w) if coef_q is None else coef_q
    loc = np.einsum("mq,qa,qb->mab", w * c, _QB, _QB)
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    return _sym_from_local(rows, cols, loc.reshape(-1), mesh.n_vertices)


def load_vector(mesh: Mesh, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    pts, w = mesh.quadrature_points()
    fq = np.asarray(f(pts.reshape(-1, 2)), dtype=complex).reshape(w.shape)
    loc = np.einsum("mq,qa->ma", w * fq, _QB)
    b = np.zeros(mesh.n_vertices, dtype=complex)
    np.add.at(b, mesh.triangles.ravel(), loc.ravel())
    return b


def dtn_matrix(mesh: Mesh, k: float, R: float, n_modes: int) -> tuple[sps.csc_matrix, np.ndarray]:
    """Truncated modal DtN coupling on the outer ring.

    Boundary traces are hat functions in the polar angle, so
    ``int phi_i e^{i n theta} R dtheta = R h e^{i n theta_i} sinc^2(n h / 2)``.
    """
    from .modal import dtn_coefficients

    idx = mesh.boundary_nodes()
    m = len(idx)
    th = np.mod(np.arctan2(mesh.vertices[idx, 1], mesh.vertices[idx, 0]), 2 * np.pi)
    h = 2.0 * np.pi / m
    nmax = int(min(n_modes, m // 2 - 1))
    lam = dtn_coefficients(nmax, k, R)
    n = np.arange(nmax + 1)
    wgt = np.where(n == 0, 1.0, 2.0) * np.sinc(n / m) ** 4
    diff = th[:, None] - th[None, :]
    Bd = np.zeros((m, m), dtype=complex)
    for j in range(nmax + 1):
        Bd += (lam[j] * wgt[j]) * np.cos(j * diff)
    Bd *= R * h * h / (2.0 * np.pi)
    Bd = 0.5 * (Bd + Bd.T)
    rows = np.repeat(idx, m)
    cols = np.tile(idx, m)
    B = sps.coo_matrix((Bd.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2).tocsc()
    return B, lam


def boundary_mass(mesh: Mesh) -> sps.csc_matrix:
    idx = mesh.boundary_nodes()
    P = mesh.vertices[idx]
    nxt = np.roll(np.arange(len(idx)), -1)
    L = np.linalg.norm(P[nxt] - P, axis=1)
    i, j = idx, idx[nxt]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([L / 3, L / 3, L / 6, L / 6])
    return _sym_from_local(rows, cols, vals, mesh.n_vertices)


@dataclass
class LinearSystem:
    """Assembled system together with the pieces needed by the energy identity."""

    K: sps.csc_matrix
    b: np.ndarray
    mesh: Mesh
    delta: float
    stiff_D: sps.csc_matrix
    stiff_I: sps.csc_matrix
    mass: sps.csc_matrix
    boundary: sps.csc_matrix
    closure: str


def coefficient_arrays(mesh: Mesh, medium, delta: float):
    """Per-triangle principal coefficient and per-quadrature-point zeroth-order term."""
    inside = mesh.region == 1
    cent = mesh.centroids
    A = medium.A(cent, inside)
    s = np.where(inside, -1.0 - 1j * delta, 1.0 + 0j)
    pts, w = mesh.quadrature_points()
    ins_q = np.repeat(inside, 3)
    sig = medium.sigma(pts.reshape(-1, 2), ins_q).reshape(w.shape)
    s0 = np.where(inside, -1.0, 1.0)[:, None]
    q = medium.k**2 * s0 * sig + 1j * delta
    return A, s, q


def assemble(scenario, mesh: Mesh, delta: float, closure: Optional[str] = None,
             n_modes: Optional[int] = None, source: Optional[Callable] = None) -> LinearSystem:
    """Assemble ``K u = b`` for the scenario on ``mesh``.

    ``scenario`` provides ``medium`` (with ``geometry``, ``k``), ``R`` and a
    ``source`` callable; ``closure`` is ``"dtn"`` (default) or ``"absorbing"``.
    """
    medium = scenario.medium
    geom = medium.geometry
    cent = mesh.centroids
    tagged = mesh.region == 1
    truth = geom.inside(cent)
    if np.any(tagged != truth):
        raise InconsistentMesh(f"{int(np.sum(tagged != truth))} triangles disagree with the geometry")
    closure = closure or getattr(scenario, "closure", "dtn")
    R = float(scenario.R)
    bnd = mesh.vertices[mesh.vertex_marker == OUTER]
    if np.max(np.abs(np.hypot(bnd[:, 0], bnd[:, 1]) - R)) > 1e-12 * max(1.0, R):
        raise InconsistentMesh("outer boundary vertices are not on the circle r = R")
    A, s, q = coefficient_arrays(mesh, medium, delta)
    inside = tagged
    S = stiffness_matrix(mesh, s[:, None, None] * A)
    S_D = stiffness_matrix(mesh, np.where(inside[:, None, None], A, 0.0))
    S_I = stiffness_matrix(mesh, np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2)))
    Mq = mass_matrix(mesh, q)
    M1 = mass_matrix(mesh)
    k = float(medium.k)
    if closure == "dtn":
        from .modal import default_mode_count

        nm = n_modes if n_modes is not None else getattr(scenario, "n_modes", None)
        nm = nm if nm is not None else default_mode_count(k, R)
        B, _ = dtn_matrix(mesh, k, R, nm)
    elif closure == "absorbing":
        B = (1j * k - 1.0 / (2.0 * R)) * boundary_mass(mesh)
    else:
        raise ValueError(f"unknown closure {closure!r}")
    K = (-S + Mq + B).tocsc()
    f = source if source is not None else scenario.source
    b = load_vector(mesh, f)
    return LinearSystem(K, b, mesh, float(delta), S_D, S_I, M1, B, closure)


@dataclass
class SolutionField:
    """Complex nodal values of ``u_delta`` on a mesh."""

    mesh: Mesh
    values: np.ndarray
    delta: float
    scenario_hash: str = ""
    pivot_indicator: float = 1.0
    system: Optional[LinearSystem] = field(default=None, repr=False)
    rcond: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("solution contains NaN or Inf")

    def gradients(self) -> np.ndarray:
        """Constant gradient per triangle ``(M, 2)``."""
        return np.einsum("ma,mad->md", self.values[self.mesh.triangles], self.mesh.gradients)

    def evaluate(self, pts: np.ndarray, allowed: Optional[np.ndarray] = None):
        tri, lam = self.mesh.locate(pts, allowed)
        vals = np.einsum("na,na->n", self.values[self.mesh.triangles[tri]], lam)
        return vals, tri

    def write_csv(self, path) -> None:
        buf = io.StringIO()
        buf.write("x,y,re,im\n")
        for (x, y), u in zip(self.mesh.vertices, self.values):
            buf.write(f"{float(x)!r},{float(y)!r},{float(u.real)!r},{float(u.imag)!r}\n")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


def _rcond_estimate(K: sps.csc_matrix, lu) -> float:
    n = K.shape[0]
    inv = spla.LinearOperator(
        (n, n),
        matvec=lambda x: lu.solve(np.asarray(x, dtype=complex)),
        rmatvec=lambda x: lu.solve(np.asarray(x, dtype=complex), trans="H"),
        dtype=complex,
    )
    return float(1.0 / (spla.onenormest(inv) * spla.norm(K, 1)))


def solve(system: LinearSystem, scenario_hash: str = "", estimate_condition: bool = False) -> SolutionField:
    """Sparse LU solve with one step of iterative refinement.

    The pivot indicator is ``min |U_ii| / max |U_ii|``; with
    ``estimate_condition`` the reciprocal 1-norm condition number is also
    estimated (a few extra triangular solves).
    """
    K = system.K
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SingularSystem(f"factorization failed: {exc}", 0.0) from exc
    d = np.abs(lu.U.diagonal())
    piv = float(d.min() / d.max()) if d.max() > 0 else 0.0
    u = lu.solve(system.b)
    if np.all(np.isfinite(u)):
        u = u + lu.solve(system.b - K @ u)
    if not np.all(np.isfinite(u)):
        raise SingularSystem("factorization produced non-finite values", piv)
    rc = _rcond_estimate(K, lu) if estimate_condition else None
    return SolutionField(system.mesh, u, system.delta, scenario_hash, piv, system, rc)


def solve_residual(sol: SolutionField) -> float:
    s = sol.system
    nb = np.linalg.norm(s.b)
    return float(np.linalg.norm(s.K @ sol.values - s.b) / nb) if nb > 0 else float(np.linalg.norm(s.K @ sol.values))


def energy_identity_residual(solution: SolutionField, scenario=None, delta: Optional[float] = None) -> float:
    """Relative residual of the imaginary part of the discrete energy identity.

    ``delta (u^H S_D u + u^H M u) + Im(u^H B u) = Im(u^H b)`` holds exactly for
    the Galerkin solution; the residual is normalized by the sum of magnitudes.
    """
    s = solution.system
    if s is None:
        raise ValueError("solution carries no assembled system")
    d = s.delta if delta is None else float(delta)
    u = solution.values
    uc = u.conj()
    grad = float(np.real(uc @ (s.stiff_D @ u)))
    mass = float(np.real(uc @ (s.mass @ u)))
    rad = float(np.imag(uc @ (s.boundary @ u)))
    src = float(np.imag(uc @ s.b))
    lhs = d * grad + d * mass + rad
    scale = abs(d * grad) + abs(d * mass) + abs(rad) + abs(src)
    return abs(lhs - src) / scale if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class Region:
    """Annulus ``r_min < |x| < r_max`` (a disk when ``r_min = 0``)."""

    name: str
    r_min: float
    r_max: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        r = np.hypot(pts[..., 0], pts[..., 1])
        return (r > self.r_min) & (r < self.r_max)


@dataclass
class Diagnostics:
    region_l2: dict
    region_h1: dict
    tube_h1_mismatch: float
    gap_energy: float
    sigma_gap_mass: float
    flux_jump: float

    def to_dict(self) -> dict:
        return {
            "region_l2": dict(self.region_l2),
            "region_h1": dict(self.region_h1),
            "tube_h1_mismatch": self.tube_h1_mismatch,
            "gap_energy": self.gap_energy,
            "sigma_gap_mass": self.sigma_gap_mass,
            "flux_jump": self.flux_jump,
        }


def region_norms(solution: SolutionField, region: Region) -> tuple[float, float]:
    """``L^2`` and ``H^1`` norms over the triangles whose centroid lies in ``region``.

    Exact (up to the polygonal approximation) when the region radii are mesh rings.
    """
    mesh = solution.mesh
    _, w = mesh.quadrature_points()
    mask = region.contains(mesh.centroids)[:, None]
    uq = np.einsum("ma,qa->mq", solution.values[mesh.triangles], _QB)
    g = solution.gradients()
    l2 = float(np.sum(w * mask * np.abs(uq) ** 2))
    h1 = l2 + float(np.sum(w * mask * np.sum(np.abs(g) ** 2, axis=1)[:, None]))
    return math.sqrt(l2), math.sqrt(h1)


def tube_quantities(solution: SolutionField, medium, F, tau: float) -> tuple[float, float, float]:
    """``(|u - v|_{H^1(D_tau)}, int |<(A - F*A) grad u, grad u>|, int |Sigma - F*Sigma| |u|^2)``."""
    mesh = solution.mesh
    geom = medium.geometry
    pts, w = mesh.quadrature_points()
    inside = mesh.region == 1
    flat = pts.reshape(-1, 2)
    sd = geom.signed_distance(flat).reshape(w.shape)
    mask = inside[:, None] & (sd > 0) & (sd < tau)
    tri_idx, q_idx = np.nonzero(mask)
    if len(tri_idx) == 0:
        return 0.0, 0.0, 0.0
    y = pts[tri_idx, q_idx]
    wq = w[tri_idx, q_idx]
    uq = np.einsum("na,na->n", solution.values[mesh.triangles[tri_idx]], _QB[q_idx])
    gu = solution.gradients()[tri_idx]
    x = F.inverse(y)
    D = F.jacobian(x)
    J = np.abs(np.linalg.det(D))
    vx, tx = solution.evaluate(x, allowed=~inside)
    gx = solution.gradients()[tx]
    gv = np.einsum("nji,nj->ni", np.linalg.inv(D), gx)
    Ain = medium.A(y, np.ones(len(y), bool))
    Aout = medium.A(x, np.zeros(len(x), bool))
    FA = np.einsum("nij,njk,nlk->nil", D, Aout, D) / J[:, None, None]
    sig_in = medium.sigma(y, np.ones(len(y), bool))
    Fs = medium.sigma(x, np.zeros(len(x), bool)) / J
    mism = float(np.sum(wq * (np.abs(uq - vx) ** 2 + np.sum(np.abs(gu - gv) ** 2, axis=1))))
    Mg = Ain - FA
    quad = np.einsum("ni,nij,nj->n", gu.conj(), Mg, gu)
    gap = float(np.sum(wq * np.abs(quad)))
    smass = float(np.sum(wq * np.abs(sig_in - Fs) * np.abs(uq) ** 2))
    return math.sqrt(mism), gap, smass


def flux_jump(solution: SolutionField, medium, F) -> float:
    """Edge-length weighted ``L^2`` norm of ``(F*A grad v - A grad u) . nu`` on the interface."""
    mesh = solution.mesh
    E = mesh.interface_edges()
    if len(E) == 0:
        return 0.0
    P0 = mesh.vertices[E[:, 0]]
    P1 = mesh.vertices[E[:, 1]]
    mid = 0.5 * (P0 + P1)
    L = np.linalg.norm(P1 - P0, axis=1)
    nu = medium.geometry.project(mid).normal
    g = solution.gradients()
    g_in, g_out = g[E[:, 2]], g[E[:, 3]]
    D = F.jacobian(mid)
    J = np.abs(np.linalg.det(D))
    Aout = medium.A(mid, np.zeros(len(mid), bool))
    Ain = medium.A(mid, np.ones(len(mid), bool))
    outer = np.einsum("nij,njk,nk->ni", D, Aout, g_out) / J[:, None]
    inner = np.einsum("nij,nj->ni", Ain, g_in)
    jump = np.einsum("ni,ni->n", outer - inner, nu)
    return float(math.sqrt(np.sum(L * np.abs(jump) ** 2)))


def diagnostics(solution: SolutionField, scenario, F, regions: Sequence[Region]) -> Diagnostics:
    """All diagnostic integrals for one solution."""
    medium = scenario.medium
    tau = getattr(F, "tau", None) or medium.geometry.tau
    l2, h1 = {}, {}
    for reg in regions:
        l2[reg.name], h1[reg.name] = region_norms(solution, reg)
    mism, gap, smass = tube_quantities(solution, medium, F, tau)
    fj = flux_jump(solution, medium, F)
    return Diagnostics(l2, h1, mism, gap, smass, fj)


def h1_norm(solution: SolutionField) -> float:
    s = solution.system
    u = solution.values
    return math.sqrt(float(np.real(u.conj() @ ((s.stiff_I + s.mass) @ u))))


def lemma_quantities(solution: SolutionField, source: Callable) -> dict:
    """Terms of ``|u|_{H^1}^2 <= C (|int f conj(u)| / delta + |f|^2)``."""
    s = solution.system
    u = solution.values
    mesh = solution.mesh
    pts, w = mesh.quadrature_points()
    fq = np.asarray(source(pts.reshape(-1, 2)), dtype=complex).reshape(w.shape)
    f_norm2 = float(np.sum(w * np.abs(fq) ** 2))
    pair = complex(u.conj() @ s.b)
    return {"h1_sq": h1_norm(solution) ** 2, "pairing": abs(pair), "f_norm_sq": f_norm2}


def compare_oracle(scenario, delta: float, n_angular: int = 256, refine: bool = True,
                   cells_per_layer: int = 4096) -> dict:
    """Relative ``L^2(B_R)`` error of the FEM solution against the modal oracle.

    With ``refine`` the error is also computed at ``2 n_angular`` and the
    observed order ``log2(e_coarse / e_fine)`` reported.
    """
    from .modal import modal_solution

    lay = scenario.layered_medium()
    ref = modal_solution(lay, scenario.modal_source(), delta, scenario.n_modes_modal, cells_per_layer)

    def err(n_ang):
        mesh = scenario.build_mesh(n_ang)
        sol = solve(assemble(scenario, mesh, delta))
        pts, w = mesh.quadrature_points()
        uq = np.einsum("ma,qa->mq", sol.values[mesh.triangles], _QB)
        rq = ref(pts.reshape(-1, 2)).reshape(w.shape)
        e = math.sqrt(float(np.sum(w * np.abs(uq - rq) ** 2)))
        nrm = math.sqrt(float(np.sum(w * np.abs(rq) ** 2)))
        return e / nrm, mesh.n_vertices

    e1, n1 = err(n_angular)
    out = {"delta": float(delta), "n_angular": int(n_angular), "error": e1, "dofs": n1}
    if refine:
        e2, n2 = err(2 * n_angular)
        out.update({"error_fine": e2, "dofs_fine": n2, "ratio": e1 / e2, "order": math.log2(e1 / e2)})
    return out
