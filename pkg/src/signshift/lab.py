"""Scenario configuration, limiting-absorption sweeps and resonance detection."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional, Sequence

import numpy as np

from . import fem
from .errors import InsufficientData, ParseError, SingularSystem, ValidationError
from .geometry import Circle, InterfaceGeometry, curve_from_dict
from .medium import MatrixCoefficient, Medium, ScalarCoefficient
from .modal import (Layer, LayeredMedium, RingPatch, Source, default_mode_count, field_power_balance,
                    modal_solution)
from .reflectmap import ConditionVerdict, classify, reflection_from_spec

DEFAULT_DELTAS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
SWEEP_COLUMNS = ("delta", "region", "l2", "h1", "gap_energy", "sigma_gap_mass", "tube_h1_mismatch",
                 "flux_jump", "pivot_indicator")
GROWTH_MIN_P = 0.25
GROWTH_MAX_RESIDUAL = 0.1
STABLE_REL_CHANGE = 0.05
ENERGY_TOL = 1e-10
SOURCE_RULE = "supp f must lie in B_R0 minus the interface"
_KEYS = {"name", "target", "geometry", "medium", "reflection", "source", "sweep", "regions", "solver", "classifier"}


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _patch_from_dict(d: dict, rotation: float) -> RingPatch:
    try:
        radius, width = float(d["radius"]), float(d["width"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"source patch needs numeric radius and width: {d!r}") from exc
    if width <= 0 or radius - width < 0:
        raise ValidationError("source patch must have positive width and lie in r >= 0")
    amp = float(d.get("amplitude", 1.0))
    if "modes" in d:
        modes = []
        for entry in d["modes"]:
            n = int(entry[0])
            c = complex(float(entry[1]), float(entry[2]) if len(entry) > 2 else 0.0)
            modes.append((n, c * complex(math.cos(n * rotation), -math.sin(n * rotation))))
        return RingPatch(radius, width, amp, modes=tuple(modes))
    aw = float(d.get("angular_width", math.pi))
    return RingPatch(radius, width, amp, float(d.get("angle", 0.0)) + rotation, aw)


@dataclass
class Scenario:
    """Validated scenario: geometry, medium, reflection map, sources, sweep and solver settings."""

    name: str
    config: dict
    geometry: InterfaceGeometry
    medium: Medium
    reflection: Any
    R: float
    sources: list
    deltas: tuple
    regions: list
    solver: dict
    target: Optional[str] = None
    alphas: tuple = (0.0, 1.0)
    betas: tuple = (1.0,)

    @property
    def source(self) -> Source:
        return self.sources[0]

    @property
    def backend(self) -> str:
        return self.solver.get("backend", "fem")

    @property
    def closure(self) -> str:
        return self.solver.get("closure", "dtn")

    @property
    def n_modes(self) -> Optional[int]:
        return self.solver.get("n_modes")

    @property
    def n_modes_modal(self) -> int:
        return int(self.solver.get("n_modes") or default_mode_count(self.medium.k, self.R))

    @property
    def hash(self) -> str:
        return hashlib.sha256(_canonical(self.config).encode()).hexdigest()

    def circle_radii(self) -> list[float]:
        """Radii of the interface circles; all must be centered at the origin."""
        radii = []
        for c in self.geometry.components:
            if not isinstance(c, Circle) or np.any(np.asarray(c.center) != 0.0):
                raise ValidationError("polar meshes and the modal solver need origin-centered circles")
            radii.append(float(c.radius))
        return sorted(radii)

    def build_mesh(self, n_angular: Optional[int] = None) -> fem.Mesh:
        n_ang = int(n_angular or self.solver.get("n_angular", 128))
        rings = [r for reg in self.regions for r in (reg.r_min, reg.r_max)]
        return fem.build_polar_mesh(self.circle_radii(), self.R, n_ang, self.solver.get("n_radial_per_band"), rings)

    def layered_medium(self) -> LayeredMedium:
        radii = self.circle_radii()
        breaks = [0.0] + radii + [self.R]
        layers = []
        for j, (a, b) in enumerate(zip(breaks, breaks[1:])):
            inside = (len(radii) - j) % 2 == 1
            A = self.medium.A_in if inside else self.medium.A_out
            iso = A.isotropic_value
            if iso is None:
                raise ValidationError("the modal solver needs isotropic coefficients")
            sig = self.medium.sigma_in if inside else self.medium.sigma_out
            layers.append(Layer(a, b, iso, sig, -1 if inside else 1))
        return LayeredMedium(tuple(layers), self.medium.k)

    def modal_source(self, index: int = 0) -> Source:
        return self.sources[index]


def _validate_keys(cfg: dict) -> None:
    if not isinstance(cfg, dict):
        raise ParseError("scenario must be a JSON object")
    unknown = set(cfg) - _KEYS
    if unknown:
        raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
    for key in ("geometry", "medium", "source"):
        if key not in cfg:
            raise ValidationError(f"scenario is missing '{key}'")


def _touches_interface(geometry: InterfaceGeometry, pts: np.ndarray) -> bool:
    sd = geometry.signed_distance(pts)
    return bool(np.min(np.abs(sd)) <= 1e-12 or (np.any(sd > 0) and np.any(sd < 0)))


def _annulus_samples(r_lo: float, r_hi: float, n_r: int = 64, n_t: int = 256) -> np.ndarray:
    r = np.linspace(r_lo, r_hi, n_r)
    t = 2 * np.pi * np.arange(n_t) / n_t
    rr, tt = np.meshgrid(r, t)
    return np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build and validate a :class:`Scenario` from a configuration mapping."""
    _validate_keys(cfg)
    g = cfg["geometry"]
    try:
        comps = [curve_from_dict(c) for c in g["components"]]
        geometry = InterfaceGeometry(comps, float(g.get("tau", 0.1)))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad geometry: {exc}") from exc
    m = cfg["medium"]
    k, R0 = float(m.get("k", 1.0)), float(m["R0"])
    R = float(g.get("domain_radius", m.get("R", 2.5)))
    if not R > R0:
        raise ValidationError(f"domain radius R = {R} must exceed R0 = {R0}")
    if not k > 0:
        raise ValidationError("k must be positive")
    ins, out = m.get("inside", {}), m.get("outside", {})
    A_in = MatrixCoefficient.from_spec(ins.get("A", 1.0))
    A_out = MatrixCoefficient.from_spec(out.get("A", 1.0))
    s_in = ScalarCoefficient.from_spec(ins.get("sigma", 1.0))
    s_out = ScalarCoefficient.from_spec(out.get("sigma", 1.0))
    if A_out.isotropic_value != 1.0 or s_out.kind != "constant" or s_out.value != 1.0:
        raise ValidationError("outside D the coefficients must be A = I and Sigma = 1")
    bpts = np.array([b.position for b in geometry.boundary_points(256)])
    if np.max(np.hypot(bpts[:, 0], bpts[:, 1])) >= R0:
        raise ValidationError("D must be compactly contained in B_R0")
    medium = Medium(geometry, k, R0, A_in, A_out, s_in, s_out)
    reflection = reflection_from_spec(geometry, cfg.get("reflection"))
    target = cfg.get("target")
    src = cfg["source"]
    rotations = [float(v) for v in src.get("rotations", [0.0])]
    if not src.get("patches"):
        raise ValidationError("source needs at least one patch")
    sources = [Source(tuple(_patch_from_dict(p, rot) for p in src["patches"])) for rot in rotations]
    for q in sources[0].patches:
        if q.radius + q.width > R0:
            raise ValidationError(f"{SOURCE_RULE}: patch at r = {q.radius} leaves B_R0")
        if target in ("thm2", "resonant"):
            pts = _annulus_samples(q.radius - q.width, q.radius + q.width)
            if _touches_interface(geometry, pts):
                raise ValidationError(f"{SOURCE_RULE}: patch at r = {q.radius} overlaps the interface")
    regions = []
    for rd in cfg.get("regions", []):
        reg = fem.Region(str(rd["name"]), float(rd.get("r_min", 0.0)), float(rd["r_max"]))
        if not (0 <= reg.r_min < reg.r_max <= R0):
            raise ValidationError(f"region {reg.name} must satisfy 0 <= r_min < r_max <= R0")
        if _touches_interface(geometry, _annulus_samples(reg.r_min, reg.r_max)):
            raise ValidationError(f"region {reg.name} must keep a positive distance from the interface")
        regions.append(reg)
    sweep = cfg.get("sweep", {})
    deltas = tuple(sorted((float(d) for d in sweep.get("deltas", DEFAULT_DELTAS)), reverse=True))
    if any(d <= 0 for d in deltas):
        raise ValidationError("absorption parameters must be positive")
    solver = dict(cfg.get("solver", {}))
    if solver.get("backend", "fem") not in ("fem", "modal"):
        raise ValidationError("solver backend must be 'fem' or 'modal'")
    if solver.get("closure", "dtn") not in ("dtn", "absorbing"):
        raise ValidationError("closure must be 'dtn' or 'absorbing'")
    clf = cfg.get("classifier", {})
    return Scenario(
        name=str(cfg.get("name", "scenario")), config=cfg, geometry=geometry, medium=medium,
        reflection=reflection, R=R, sources=sources, deltas=deltas, regions=regions, solver=solver,
        target=target, alphas=tuple(clf.get("alphas", (0.0, 1.0))), betas=tuple(clf.get("betas", (1.0,))),
    )


def fixture_names() -> list[str]:
    files = resources.files("signshift") / "fixtures"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario from a JSON file path or the name of a bundled fixture."""
    text = None
    p = os.fspath(path_or_name)
    if os.path.exists(p):
        with open(p, encoding="utf-8") as fh:
            text = fh.read()
    else:
        res = resources.files("signshift") / "fixtures" / f"{p}.json"
        if not res.is_file():
            raise ParseError(f"no such scenario file or fixture: {p}")
        text = res.read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return scenario_from_dict(cfg)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRecord:
    """Diagnostics of one solve."""

    delta: float
    source: int
    status: str
    region_l2: dict = field(default_factory=dict)
    region_h1: dict = field(default_factory=dict)
    gap_energy: float = float("nan")
    sigma_gap_mass: float = float("nan")
    tube_h1_mismatch: float = float("nan")
    flux_jump: float = float("nan")
    pivot_indicator: float = float("nan")
    energy_residual: float = float("nan")
    lemma: dict = field(default_factory=dict)
    seconds: float = 0.0


@dataclass
class GrowthFit:
    """Least-squares fit ``log |u|_{L^2(K)} ~ -p log delta`` over the smallest absorption values."""

    region: str
    source: int
    p: float
    residual: float
    monotone: bool
    n_points: int
    rel_change: float

    def to_dict(self) -> dict:
        return {"region": self.region, "source": self.source, "p": self.p, "residual": self.residual,
                "monotone": self.monotone, "n_points": self.n_points, "rel_change": self.rel_change}


@dataclass
class SweepReport:
    scenario: Scenario
    classification: ConditionVerdict
    records: list
    fits: list
    stabilized: bool
    lemma_constant: float
    max_energy_residual: float
    runtime: dict
    fields: list = field(default_factory=list, repr=False)

    def ok_records(self, source: int = 0) -> list:
        return [r for r in self.records if r.source == source and r.status == "ok"]


def _fem_solve(scn: Scenario, mesh: fem.Mesh, delta: float, source: Source):
    system = fem.assemble(scn, mesh, delta, source=source)
    sol = fem.solve(system, scn.hash)
    diag = fem.diagnostics(sol, scn, scn.reflection, scn.regions)
    lem = fem.lemma_quantities(sol, source)
    return sol, diag, fem.energy_identity_residual(sol), lem


def _modal_solve(scn: Scenario, mesh: fem.Mesh, delta: float, source: Source, lay: LayeredMedium):
    cells = int(scn.solver.get("cells_per_layer", 4096))
    mf = modal_solution(lay, source, delta, scn.n_modes_modal, cells)
    sol = fem.SolutionField(mesh, mf(mesh.vertices), delta, scn.hash, mf.pivot_indicator)
    diag = fem.diagnostics(sol, scn, scn.reflection, [])
    for reg in scn.regions:
        diag.region_l2[reg.name] = mf.l2_annulus(reg.r_min, reg.r_max)
        diag.region_h1[reg.name] = mf.h1_annulus(reg.r_min, reg.r_max)
    resid = field_power_balance(mf, lay, source)
    pair, fn2 = mf.source_pairing(source)
    lem = {"h1_sq": mf.h1_annulus(0.0, scn.R) ** 2, "pairing": abs(pair), "f_norm_sq": fn2}
    return sol, diag, resid, lem


def fit_growth(deltas: Sequence[float], norms: Sequence[float], n_fit: int = 3) -> tuple[float, float]:
    """Fit ``p`` in ``norm ~ delta^{-p}`` over the ``n_fit`` smallest deltas; return ``(p, max log10 residual)``."""
    d = np.asarray(deltas, dtype=float)
    v = np.asarray(norms, dtype=float)
    order = np.argsort(d)[:n_fit]
    x, y = np.log10(d[order]), np.log10(v[order])
    slope, icpt = np.polyfit(x, y, 1)
    res = float(np.max(np.abs(y - (slope * x + icpt))))
    return float(-slope), res


def _solve_one(scn: Scenario, mesh: fem.Mesh, lay, si: int, delta: float, keep_field: bool):
    src = scn.sources[si]
    t1 = time.perf_counter()
    try:
        if scn.backend == "modal":
            sol, diag, resid, lem = _modal_solve(scn, mesh, delta, src, lay)
        else:
            sol, diag, resid, lem = _fem_solve(scn, mesh, delta, src)
    except SingularSystem as exc:
        rec = SweepRecord(delta, si, "singular", pivot_indicator=exc.pivot_indicator,
                          seconds=time.perf_counter() - t1)
        return rec, None
    rec = SweepRecord(delta, si, "ok", diag.region_l2, diag.region_h1, diag.gap_energy, diag.sigma_gap_mass,
                      diag.tube_h1_mismatch, diag.flux_jump, sol.pivot_indicator, resid, lem,
                      time.perf_counter() - t1)
    return rec, ((si, delta, sol) if keep_field else None)


def run_sweep(scn: Scenario, keep_fields: bool = False, n_fit: int = 3, n_jobs: int = 1) -> SweepReport:
    """Solve for every absorption value and source, then fit growth exponents per region.

    Solves are independent; ``n_jobs > 1`` dispatches them to a thread pool.
    Results are collected in the fixed (source, descending delta) order, so the
    report does not depend on scheduling.  Singular systems are recorded, not raised.
    """
    t0 = time.perf_counter()
    verdict = classify(scn, int(scn.config.get("classifier", {}).get("n_samples", 400)))
    t_cls = time.perf_counter() - t0
    mesh = scn.build_mesh()
    lay = scn.layered_medium() if scn.backend == "modal" else None
    tasks = [(si, d) for si in range(len(scn.sources)) for d in scn.deltas]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda t: _solve_one(scn, mesh, lay, t[0], t[1], keep_fields), tasks))
    else:
        results = [_solve_one(scn, mesh, lay, si, d, keep_fields) for si, d in tasks]
    records = [r for r, _ in results]
    fields = [f for _, f in results if f is not None]
    fits = []
    for si in range(len(scn.sources)):
        ok = sorted((r for r in records if r.source == si and r.status == "ok"), key=lambda r: -r.delta)
        if len(ok) < 2:
            continue
        for reg in scn.regions:
            vals = [r.region_l2[reg.name] for r in ok]
            ds = [r.delta for r in ok]
            tail = vals[-4:]
            mono = len(tail) >= 2 and all(b > a for a, b in zip(tail, tail[1:]))
            rel = abs(vals[-1] - vals[-2]) / max(abs(vals[-1]), 1e-300)
            if len(ok) >= n_fit:
                p, res = fit_growth(ds, vals, n_fit)
            else:
                p, res = float("nan"), float("nan")
            fits.append(GrowthFit(reg.name, si, p, res, mono, len(ok), rel))
    stabilized = bool(fits) and all(f.rel_change <= STABLE_REL_CHANGE for f in fits)
    lem_c = 0.0
    for r in records:
        if r.status == "ok" and r.lemma:
            denom = r.lemma["pairing"] / r.delta + r.lemma["f_norm_sq"]
            lem_c = max(lem_c, r.lemma["h1_sq"] / denom)
    resids = [r.energy_residual for r in records if r.status == "ok"]
    runtime = {"classify_seconds": t_cls, "total_seconds": time.perf_counter() - t0,
               "solve_seconds": [r.seconds for r in records]}
    return SweepReport(scn, verdict, records, fits, stabilized, lem_c, max(resids) if resids else float("nan"),
                       runtime, fields)


@dataclass(frozen=True)
class ResonanceVerdict:
    """``"Stable"``, ``"Resonant"`` (with exponent ``p``) or ``"Inconclusive"``."""

    tag: str
    p: Optional[float] = None
    region: Optional[str] = None
    source: Optional[int] = None

    def to_dict(self) -> dict:
        return {"tag": self.tag, "p": self.p, "region": self.region, "source": self.source}


def detect_resonance(report: SweepReport, region: Optional[str] = None) -> ResonanceVerdict:
    """Decide between stabilization and power-law growth of region norms.

    Resonant needs monotone growth over the last three decades with fitted
    ``p >= 0.25`` and log-residual at most 0.1; Stable needs the relative change
    between the two smallest absorption values to stay within 5% everywhere.
    """
    n_ok = min(len(report.ok_records(s)) for s in range(len(report.scenario.sources)))
    if n_ok < 4:
        raise InsufficientData(f"need at least 4 successful absorption values, have {n_ok}")
    fits = [f for f in report.fits if region is None or f.region == region]
    if region is not None and not fits:
        raise ValueError(f"unknown region {region!r}")
    growing = [f for f in fits if f.monotone and f.p >= GROWTH_MIN_P and f.residual <= GROWTH_MAX_RESIDUAL]
    if growing:
        best = max(growing, key=lambda f: f.p)
        return ResonanceVerdict("Resonant", best.p, best.region, best.source)
    if fits and all(f.rel_change <= STABLE_REL_CHANGE for f in fits):
        return ResonanceVerdict("Stable")
    return ResonanceVerdict("Inconclusive")


def _round(x, digits: int = 6):
    if isinstance(x, float):
        if not math.isfinite(x):
            return None
        return float(f"{x:.{digits}g}")
    if isinstance(x, dict):
        return {k: _round(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v, digits) for v in x]
    return x


def verdict_dict(report: SweepReport) -> dict:
    try:
        res = detect_resonance(report).to_dict()
    except InsufficientData as exc:
        res = {"tag": "InsufficientData", "detail": str(exc)}
    return _round({
        "scenario": report.scenario.name,
        "scenario_hash": report.scenario.hash,
        "classification": report.classification.to_dict(),
        "resonance": res,
        "stabilized": report.stabilized,
        "growth": [f.to_dict() for f in report.fits],
        "lemma_constant": report.lemma_constant,
        "energy_identity_ok": bool(report.max_energy_residual <= ENERGY_TOL),
        "deltas": list(report.scenario.deltas),
        "failed_deltas": [[r.source, r.delta] for r in report.records if r.status != "ok"],
    })


def _csv_rows(report: SweepReport, source: int):
    for r in sorted((r for r in report.records if r.source == source), key=lambda r: -r.delta):
        for reg in report.scenario.regions:
            vals = [r.delta, None, r.region_l2.get(reg.name, float("nan")), r.region_h1.get(reg.name, float("nan")),
                    r.gap_energy, r.sigma_gap_mass, r.tube_h1_mismatch, r.flux_jump, r.pivot_indicator]
            row = [repr(float(v)) if v is not None else "" for v in vals]
            row[1] = reg.name
            yield row


def emit_report(report: SweepReport, out_dir, fields: bool = False) -> dict:
    """Write ``sweep.csv`` (one file per extra source), ``verdict.json`` and optional field CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    for si in range(len(report.scenario.sources)):
        name = "sweep.csv" if si == 0 else f"sweep_source{si}.csv"
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            w.writerows(_csv_rows(report, si))
        written[name] = path
    vpath = os.path.join(out_dir, "verdict.json")
    with open(vpath, "w", encoding="utf-8") as fh:
        json.dump(verdict_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
    written["verdict.json"] = vpath
    if fields:
        for si, delta, sol in report.fields:
            name = f"field_s{si}_delta{delta:.0e}.csv"
            sol.write_csv(os.path.join(out_dir, name))
            written[name] = os.path.join(out_dir, name)
    return written
