import copy
import csv
import json
import math

import numpy as np
import pytest

from signshift import lab
from signshift.errors import InsufficientData, ParseError, ValidationError

from conftest import RESONANT_FIXTURE, STABLE_FIXTURES


def fixture_config(name):
    return copy.deepcopy(lab.load_scenario(name).config)


def test_fixture_names():
    assert set(lab.fixture_names()) == set(STABLE_FIXTURES) | {RESONANT_FIXTURE}


@pytest.mark.parametrize("name", list(STABLE_FIXTURES) + [RESONANT_FIXTURE])
def test_fixtures_load(name):
    scn = lab.load_scenario(name)
    assert scn.name == name
    assert scn.R > scn.medium.R0
    assert len(scn.deltas) == 6 and list(scn.deltas) == sorted(scn.deltas, reverse=True)


def test_load_from_path(tmp_path):
    cfg = fixture_config("cor3_sigma_0.5")
    p = tmp_path / "s.json"
    p.write_text(json.dumps(cfg))
    assert lab.load_scenario(p).hash == lab.load_scenario("cor3_sigma_0.5").hash


def test_parse_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        lab.load_scenario(p)
    with pytest.raises(ParseError):
        lab.load_scenario("no_such_fixture")


def test_source_on_interface_rejected():
    cfg = fixture_config("cor3_sigma_0.5")
    cfg["source"]["patches"][0]["radius"] = 1.0
    with pytest.raises(ValidationError, match="supp f"):
        lab.scenario_from_dict(cfg)


def test_source_on_interface_allowed_without_target():
    cfg = fixture_config("cor0_contrast3")
    cfg["source"]["patches"][0]["radius"] = 1.0
    cfg.pop("target", None)
    lab.scenario_from_dict(cfg)


@pytest.mark.parametrize("mutate", [
    lambda c: c["geometry"].__setitem__("domain_radius", 1.6),
    lambda c: c["geometry"].__setitem__("domain_radius", 1.0),
    lambda c: c["medium"].__setitem__("k", 0.0),
    lambda c: c["medium"]["outside"].__setitem__("A", 2.0),
    lambda c: c["medium"]["outside"].__setitem__("sigma", 0.5),
    lambda c: c["regions"].append({"name": "bad", "r_min": 0.9, "r_max": 1.1}),
    lambda c: c["regions"].append({"name": "big", "r_min": 0.0, "r_max": 2.0}),
    lambda c: c["sweep"].__setitem__("deltas", [1e-2, 0.0]),
    lambda c: c["solver"].__setitem__("backend", "spectral"),
    lambda c: c["solver"].__setitem__("closure", "pml"),
    lambda c: c.__setitem__("unexpected", 1),
    lambda c: c["source"]["patches"][0].__setitem__("radius", 1.55),
    lambda c: c["geometry"]["components"][0].__setitem__("radius", 1.7),
])
def test_validation_errors(mutate):
    cfg = fixture_config("cor3_sigma_0.5")
    mutate(cfg)
    with pytest.raises(ValidationError):
        lab.scenario_from_dict(cfg)


def test_hash_stable_and_sensitive():
    a = lab.load_scenario("cor3_sigma_0.5")
    cfg = fixture_config("cor3_sigma_0.5")
    assert lab.scenario_from_dict(cfg).hash == a.hash
    cfg["medium"]["k"] = 1.1
    assert lab.scenario_from_dict(cfg).hash != a.hash


def test_fit_growth_exact_power_law():
    d = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    p, res = lab.fit_growth(d, 3.0 * d**-0.7)
    assert p == pytest.approx(0.7, abs=1e-12)
    assert res <= 1e-12


def test_emit_report_shape(tmp_path, sweep_cache):
    rep = sweep_cache("cor3_sigma_0.5")
    out = lab.emit_report(rep, tmp_path)
    assert set(out) == {"sweep.csv", "verdict.json"}
    with open(out["sweep.csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(lab.SWEEP_COLUMNS)
    assert rows[0] == ["delta", "region", "l2", "h1", "gap_energy", "sigma_gap_mass", "tube_h1_mismatch",
                       "flux_jump", "pivot_indicator"]
    assert len(rows) == 1 + 18
    v = json.loads((tmp_path / "verdict.json").read_text())
    assert v["classification"]["tag"] == "Thm2"
    assert v["resonance"]["tag"] == "Stable"
    assert v["energy_identity_ok"] is True


def test_emit_report_deterministic(tmp_path, sweep_cache):
    scn = lab.load_scenario("cor0_contrast3")
    a = lab.emit_report(lab.run_sweep(scn), tmp_path / "a")
    b = lab.emit_report(sweep_cache("cor0_contrast3"), tmp_path / "b")
    assert open(a["verdict.json"], "rb").read() == open(b["verdict.json"], "rb").read()


def test_fields_flag(tmp_path):
    cfg = fixture_config("cor0_contrast3")
    cfg["sweep"]["deltas"] = [1e-1, 1e-2, 1e-3, 1e-4]
    rep = lab.run_sweep(lab.scenario_from_dict(cfg), keep_fields=True)
    out = lab.emit_report(rep, tmp_path, fields=True)
    field_files = sorted(n for n in out if n.startswith("field_"))
    assert len(field_files) == 4
    assert (tmp_path / "field_s0_delta1e-01.csv").read_text().startswith("x,y,re,im\n")
    assert not any(n.startswith("field_") for n in lab.emit_report(rep, tmp_path / "nofields"))


def test_insufficient_data():
    cfg = fixture_config("cor0_contrast3")
    cfg["sweep"]["deltas"] = [1e-1, 1e-2, 1e-3]
    rep = lab.run_sweep(lab.scenario_from_dict(cfg))
    with pytest.raises(InsufficientData):
        lab.detect_resonance(rep)
    assert lab.verdict_dict(rep)["resonance"]["tag"] == "InsufficientData"


def test_parallel_sweep_matches_serial():
    cfg = fixture_config("cor3_sigma_0.5")
    cfg["sweep"]["deltas"] = [1e-1, 1e-3, 1e-5, 1e-6]
    scn = lab.scenario_from_dict(cfg)
    a = lab.verdict_dict(lab.run_sweep(scn))
    b = lab.verdict_dict(lab.run_sweep(scn, n_jobs=3))
    assert a == b


def test_cor3_sweep(sweep_cache):
    rep = sweep_cache("cor3_sigma_0.5")
    assert rep.classification.tag == "Thm2"
    assert rep.stabilized
    assert all(abs(f.p) <= 0.05 for f in rep.fits)
    assert lab.detect_resonance(rep).tag == "Stable"


def test_cor0_sweep_h1_bounded(sweep_cache):
    rep = sweep_cache("cor0_contrast3")
    assert rep.classification.tag == "Thm0"
    assert rep.stabilized
    h1 = [math.sqrt(r.lemma["h1_sq"]) for r in rep.ok_records() if r.delta <= 1e-4]
    assert len(h1) == 3
    assert (max(h1) - min(h1)) / max(h1) <= 0.10


def test_resonant_region_rejected(sweep_cache):
    with pytest.raises(ValueError):
        lab.detect_resonance(sweep_cache("cor3_sigma_0.5"), region="nowhere")


def test_cross_backend_agreement(sweep_cache):
    fem_rep = sweep_cache("cor3_sigma_0.5")
    cfg = fixture_config("cor3_sigma_0.5")
    cfg["sweep"]["deltas"] = [d for d in cfg["sweep"]["deltas"] if d >= 1e-4]
    cfg["solver"]["backend"] = "modal"
    modal_rep = lab.run_sweep(lab.scenario_from_dict(cfg))
    by_delta = {r.delta: r for r in fem_rep.ok_records()}
    for rm in modal_rep.ok_records():
        rf = by_delta[rm.delta]
        for name, v in rm.region_l2.items():
            assert rf.region_l2[name] == pytest.approx(v, rel=0.02)
