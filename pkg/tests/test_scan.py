import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from feshscan import coupled as cp
from feshscan import scan
from feshscan import separable as sep
from feshscan.config import MagneticMap
from feshscan.model import Model

from conftest import make_config

SVG_NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def small_cfg():
    return make_config("separable", 0.3, panels=20, lam=(0.5, 60.0), points=60,
                       magnetic_map=MagneticMap(20.0, 2.0, 100.0))


@pytest.fixture(scope="module")
def small_curve(small_cfg):
    return scan.sweep(small_cfg)


def test_base_grid_spacing(small_cfg, small_curve):
    lo, hi = small_cfg.lambda_range
    lam = small_curve.lam
    assert lam[0] == lo and lam[-1] == hi
    assert np.all(np.diff(lam) > 0)
    assert np.max(np.diff(lam)) <= (hi - lo) / (small_cfg.points - 1) * (1 + 1e-12)
    base = np.linspace(lo, hi, small_cfg.points)
    assert np.all(np.isin(base, lam) | [scan._in_window(x, [p for p, _ in small_curve.poles]
                                                        + small_curve.poles_U, 1e-4) for x in base])


def test_refinement_adds_points(small_cfg, small_curve):
    assert len(small_curve) > small_cfg.points - 2
    assert all(f in ("ok", "ill-conditioned", "error") for f in small_curve.flag)


def test_no_samples_in_pole_windows(small_cfg, small_curve):
    centres = [p for p, _ in small_curve.poles] + small_curve.poles_U
    for c in centres:
        assert np.all(np.abs(small_curve.lam - c) > small_cfg.tolerances.pole_window * c)


def test_pole_annotations_match_solver(small_cfg, small_curve):
    reps = cp.find_resonances_general(Model(small_cfg), with_fit=False, with_bw=False)
    assert [p for p, _ in small_curve.poles] == pytest.approx([r.lambda_j for r in reps], rel=1e-12)
    assert len(small_curve.poles) == 2


def test_sign_flip_at_annotated_poles(small_curve):
    for lam_j, c_j in small_curve.poles:
        below = small_curve.a_eff[small_curve.lam < lam_j][-1]
        above = small_curve.a_eff[small_curve.lam > lam_j][0]
        assert below * above < 0 and c_j < 0


def test_curve_matches_direct_evaluation(small_cfg, small_curve):
    m = Model(small_cfg)
    ctx = sep.separable_context(m)
    for i in (3, len(small_curve) // 2, len(small_curve) - 2):
        lam = small_curve.lam[i]
        assert small_curve.a_eff[i] == pytest.approx(sep.a_eff_separable(ctx, lam), rel=1e-9)


def test_worker_count_does_not_change_output(small_cfg, small_curve, tmp_path):
    other = scan.sweep(small_cfg, workers=2)
    a = scan.write_csv(small_curve, tmp_path / "one.csv")
    b = scan.write_csv(other, tmp_path / "two.csv")
    assert open(a, "rb").read() == open(b, "rb").read()


def test_csv_round_trip(small_curve, tmp_path):
    path = scan.write_csv(small_curve, tmp_path / "curve.csv")
    back = scan.read_csv(path)
    for name in ("lam", "a_eff", "mu_max", "cond", "B"):
        assert np.array_equal(getattr(back, name), getattr(small_curve, name))
    assert back.flag == small_curve.flag
    assert back.poles == [(float(l), float(c)) for l, c in small_curve.poles]
    assert back.digest == small_curve.digest
    text = open(path).read()
    assert text.splitlines()[6] == "lambda,B,a_eff,mu_max,cond,flag"
    assert "# config_sha256: " in text and "# solver: " in text


def test_json_reports(small_curve, tmp_path):
    path = scan.write_json(small_curve.reports, tmp_path / "r.json", small_curve.digest,
                           small_curve.solver)
    doc = json.load(open(path))
    assert doc["schema"] == "feshscan.report.v1"
    assert doc["config_sha256"] == small_curve.digest
    assert len(doc["reports"]) == 2
    for rep in doc["reports"]:
        assert {"lambda_j", "c_j", "p_j", "sigma_min", "E_res", "Gamma"} <= set(rep)
        assert rep["c_j_amplitude"] == -rep["c_j"]


def test_svg_is_wellformed(small_curve, tmp_path):
    path = scan.write_svg(small_curve, tmp_path / "curve.svg")
    root = ET.parse(path).getroot()
    assert root.tag == SVG_NS + "svg"
    assert root.get("width").startswith("864") or root.get("width").startswith("1200")
    gids = [el.get("id") for el in root.iter()]
    assert gids.count("curve-a_eff") == 1
    curve = next(el for el in root.iter() if el.get("id") == "curve-a_eff")
    assert len([el for el in curve.iter(SVG_NS + "path")]) == 1
    assert {"pole-0", "pole-1"} <= set(gids)
    again = scan.write_svg(small_curve, tmp_path / "again.svg")
    assert open(path, "rb").read() == open(again, "rb").read()


def test_export_writes_all_files(small_curve, tmp_path):
    written = scan.export(small_curve, tmp_path / "out")
    assert sorted(p.rsplit("/", 1)[1] for p in written) == ["curve.csv", "curve.svg", "reports.json"]


def test_fit_recovers_synthetic_pole():
    B = np.concatenate([np.linspace(2.0, 2.9, 20), np.linspace(3.1, 4.0, 20)])
    res = scan.fit_pole_model(B, 2.0 + 5.0 / (B - 3.0), [1.5, 4.0, 3.05])
    assert res.x == pytest.approx([2.0, 5.0, 3.0], abs=1e-10)


def test_fit_reports_non_convergence():
    B = np.linspace(0.0, 1.0, 20)
    with pytest.raises(scan.FitError) as exc:
        scan.fit_pole_model(B, np.sin(40 * B), [0.0, 1.0, 0.5], max_nfev=3)
    assert exc.value.last is not None


def test_fit_needs_samples_on_both_sides(small_cfg, small_curve):
    with pytest.raises(ValueError, match="samples per side"):
        scan.fit_feshbach(small_curve, small_cfg, window=(0.0, 1.0))


def test_feshbach_fit_of_separable_curve():
    slope = 0.01
    cfg = make_config("separable", 0.3, lam=(22.9, 23.2), points=120,
                      magnetic_map=MagneticMap(23.0, slope, 500.0))
    curve = scan.sweep(cfg)
    lam_j, c_j = curve.poles[0]
    fit = scan.fit_feshbach(curve, cfg)
    assert cfg.magnetic_map.to_lambda(fit.B_res) == pytest.approx(lam_j, abs=10 * cfg.tolerances.root_xtol * lam_j)
    assert fit.Delta * slope == pytest.approx(c_j, rel=0.02)
    assert fit.window[0] < fit.B_res < fit.window[1]
    assert fit.rms < 1e-6
