"""Parameter sweeps of a_eff over lambda (or B), Feshbach fits and file export."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from threadpoolctl import threadpool_limits

from . import coupled
from .config import ModelConfig, parse_config, serialize_config
from .model import Model

log = logging.getLogger(__name__)

SCHEMA = "feshscan.report.v1"
SIGN_CONVENTION = "a_phys: u ~ r - a outside the range, repulsive barrier gives a > 0"
COLUMNS = ("lambda", "B", "a_eff", "mu_max", "cond", "flag")
# samples with condition estimates above this are flagged
COND_FLAG = 1e8
# flank offsets around each critical value, in units of the pole window
POLE_FLANKS = (2.0, 10.0, 100.0, 1000.0)


@dataclass
class EffCurve:
    lam: np.ndarray
    a_eff: np.ndarray
    mu_max: np.ndarray
    cond: np.ndarray
    flag: list
    B: np.ndarray | None = None
    poles: list = field(default_factory=list)  # (lambda_j, c_j)
    poles_U: list = field(default_factory=list)  # |E_j|
    reports: list = field(default_factory=list, repr=False)
    digest: str = ""
    solver: dict = field(default_factory=dict)

    def __len__(self):
        return self.lam.size


# ---------------------------------------------------------------------------
# sample evaluation (runs in worker processes)

_WORKER_MODEL = {}


def _model_for(config_text: str) -> Model:
    if config_text not in _WORKER_MODEL:
        _WORKER_MODEL.clear()
        _WORKER_MODEL[config_text] = Model(parse_config(config_text))
    return _WORKER_MODEL[config_text]


def _sample(config_text: str, lam: float):
    with threadpool_limits(limits=1):
        model = _model_for(config_text)
        try:
            a, mu, cond = coupled.a_eff_sample(model, lam)
        except (ArithmeticError, ValueError) as exc:
            log.info("sample at lambda=%r failed: %s", lam, exc)
            return float("nan"), float("nan"), float("nan"), "error"
    flag = "ill-conditioned" if cond > COND_FLAG else "ok"
    return a, mu, cond, flag


def _evaluate(config_text: str, lams, workers: int):
    lams = [float(x) for x in lams]
    if workers <= 1 or len(lams) < 2:
        return [_sample(config_text, x) for x in lams]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(lams) // (4 * workers))
        return list(pool.map(_sample, [config_text] * len(lams), lams, chunksize=chunk))


# ---------------------------------------------------------------------------


def _in_window(lam, centres, rel):
    return any(abs(lam - c) <= rel * abs(c) for c in centres)


def sweep(config: ModelConfig, workers: int = 1, lambda_range=None, points=None,
          reports=None) -> EffCurve:
    """Sample a_eff on a uniform lambda grid plus adaptive midpoints.

    Resonances are located first so that no sample falls inside a pole window,
    and flank samples at ``POLE_FLANKS`` pole-window multiples are added on both
    sides of each one.
    Midpoints are added where neighbouring values differ by more than
    ``tolerances.refine_threshold``, for at most ``tolerances.max_refinements``
    rounds.  Results do not depend on ``workers``.
    """
    lo, hi = config.lambda_range if lambda_range is None else lambda_range
    n = config.points if points is None else points
    tol = config.tolerances
    text = serialize_config(config)
    model = Model(config)
    with threadpool_limits(limits=1):
        if reports is None:
            reports = coupled.find_resonances_general(model, (lo, hi))
        poles_U = [float(p) for p in model.poles]
    centres = [r.lambda_j for r in reports] + poles_U

    base = list(np.linspace(lo, hi, n))
    # flank samples resolve poles narrower than the base spacing
    for r in reports:
        for mult in POLE_FLANKS:
            for sgn in (-1.0, 1.0):
                x = r.lambda_j * (1.0 + sgn * mult * tol.pole_window)
                if lo < x < hi:
                    base.append(x)
    lams = sorted({float(x) for x in base if not _in_window(x, centres, tol.pole_window)})
    values = dict(zip(lams, _evaluate(text, lams, workers)))

    for _ in range(tol.max_refinements):
        xs = sorted(values)
        new = []
        for x0, x1 in zip(xs[:-1], xs[1:]):
            a0, a1 = values[x0][0], values[x1][0]
            jump = not (np.isfinite(a0) and np.isfinite(a1)) or abs(a1 - a0) > tol.refine_threshold
            mid = 0.5 * (x0 + x1)
            if jump and x0 < mid < x1 and not _in_window(mid, centres, tol.pole_window):
                new.append(mid)
        if not new:
            break
        values.update(zip(new, _evaluate(text, new, workers)))

    xs = np.array(sorted(values))
    rows = [values[x] for x in xs]
    B = config.magnetic_map.to_field(xs) if config.magnetic_map else None
    return EffCurve(
        lam=xs,
        a_eff=np.array([r[0] for r in rows]),
        mu_max=np.array([r[1] for r in rows]),
        cond=np.array([r[2] for r in rows]),
        flag=[r[3] for r in rows],
        B=B,
        poles=[(r.lambda_j, r.c_j) for r in reports],
        poles_U=poles_U,
        reports=list(reports),
        digest=config.digest(),
        solver=solver_parameters(config),
    )


def solver_parameters(config: ModelConfig) -> dict:
    t = config.tolerances
    return {
        "r_max": config.r_max,
        "panels": config.panels,
        "nodes_per_panel": config.nodes_per_panel,
        "cond_max": t.cond_max,
        "root_xtol": t.root_xtol,
        "pole_window": t.pole_window,
    }


# ---------------------------------------------------------------------------
# Feshbach fit a(B) = a_inf + Delta / (B - B_res)


class FitError(RuntimeError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


@dataclass(frozen=True)
class FeshbachFit:
    a_inf: float
    Delta: float
    B_res: float
    rms: float
    n_points: int
    window: tuple

    def as_dict(self) -> dict:
        return {"a_inf": self.a_inf, "Delta": self.Delta, "B_res": self.B_res,
                "rms": self.rms, "n_points": self.n_points, "window": list(self.window)}


def fit_pole_model(B, a, x0, max_nfev: int = 2000):
    """Levenberg-Marquardt fit of a_inf + Delta / (B - B_res); returns the solver result."""
    B = np.asarray(B, dtype=float)
    a = np.asarray(a, dtype=float)

    def resid(p):
        return p[0] + p[1] / (B - p[2]) - a

    def jac(p):
        d = B - p[2]
        return np.column_stack([np.ones_like(B), 1.0 / d, p[1] / d**2])

    res = least_squares(resid, np.asarray(x0, dtype=float), jac=jac, method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    if not res.success:
        raise FitError(f"Feshbach fit did not converge: {res.message}; last iterate {res.x}", res.x)
    return res


def fit_feshbach(curve: EffCurve, config: ModelConfig, pole: int = 0, window=None,
                 min_side: int = 8) -> FeshbachFit:
    """Fit the single-pole form to the samples around one annotated pole.

    ``window`` is (B_lo, B_hi).  By default it spans half the distance to the
    nearest other pole of a_eff on each side.  The levels |E_j| are not
    singular points of a_eff, so they do not limit the window.
    """
    mm = config.magnetic_map
    if mm is None:
        raise ValueError("fit needs a magnetic_map in the config")
    if not curve.poles:
        raise ValueError("curve has no annotated poles")
    lam_j, c_j = curve.poles[pole]
    B0 = float(mm.to_field(lam_j))
    ok = np.isfinite(curve.a_eff)
    if window is None:
        others = [p for p, _ in curve.poles if p != lam_j]
        gaps = [abs(p - lam_j) for p in others] or [abs(curve.lam[-1] - curve.lam[0])]
        half = 0.5 * min(gaps) / abs(mm.slope)
        window = (B0 - half, B0 + half)
    B = curve.B if curve.B is not None else mm.to_field(curve.lam)
    pw = config.tolerances.pole_window * lam_j / abs(mm.slope)
    sel = ok & (B >= window[0]) & (B <= window[1]) & (np.abs(B - B0) > pw)
    left, right = int(np.sum(sel & (B < B0))), int(np.sum(sel & (B > B0)))
    if left < min_side or right < min_side:
        raise ValueError(f"window needs >= {min_side} samples per side, got {left} and {right}")
    Bw, aw = B[sel], curve.a_eff[sel]
    Delta0 = c_j / mm.slope if np.isfinite(c_j) else (aw[-1] - aw[0]) * (Bw[-1] - B0)
    edge = np.array([aw[0], aw[-1]]) - Delta0 / (np.array([Bw[0], Bw[-1]]) - B0)
    res = fit_pole_model(Bw, aw, [float(np.mean(edge)), Delta0, B0])
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    return FeshbachFit(float(res.x[0]), float(res.x[1]), float(res.x[2]), rms, int(Bw.size),
                       (float(window[0]), float(window[1])))


# ---------------------------------------------------------------------------
# export


def _num(x) -> str:
    return repr(float(x))


def _header(curve: EffCurve) -> list:
    lines = [f"# feshscan curve ({SCHEMA})", f"# config_sha256: {curve.digest}"]
    lines.append("# solver: " + " ".join(f"{k}={v!r}" for k, v in sorted(curve.solver.items())))
    lines.append(f"# sign_convention: {SIGN_CONVENTION}")
    lines.append("# poles: " + " ".join(f"{_num(l)}:{_num(c)}" for l, c in curve.poles))
    lines.append("# closed_channel_levels: " + " ".join(_num(p) for p in curve.poles_U))
    return lines


def write_csv(curve: EffCurve, path) -> str:
    cols = [c for c in COLUMNS if c != "B" or curve.B is not None]
    try:
        with open(path, "w", newline="") as fh:
            for line in _header(curve):
                fh.write(line + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i in range(len(curve)):
                row = {"lambda": _num(curve.lam[i]), "a_eff": _num(curve.a_eff[i]),
                       "mu_max": _num(curve.mu_max[i]), "cond": _num(curve.cond[i]),
                       "flag": curve.flag[i]}
                if curve.B is not None:
                    row["B"] = _num(curve.B[i])
                w.writerow([row[c] for c in cols])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return str(path)


def read_csv(path) -> EffCurve:
    digest, poles, poles_U, solver = "", [], [], {}
    with open(path, newline="") as fh:
        body = []
        for line in fh:
            if line.startswith("# config_sha256:"):
                digest = line.split(":", 1)[1].strip()
            elif line.startswith("# poles:"):
                for tok in line.split(":", 1)[1].split():
                    l, c = tok.split(":")
                    poles.append((float(l), float(c)))
            elif line.startswith("# closed_channel_levels:"):
                poles_U = [float(t) for t in line.split(":", 1)[1].split()]
            elif line.startswith("# solver:"):
                for tok in line.split(":", 1)[1].split():
                    k, v = tok.split("=", 1)
                    solver[k] = float(v)
            elif not line.startswith("#"):
                body.append(line)
    reader = csv.DictReader(body)
    rows = list(reader)
    has_B = "B" in (reader.fieldnames or [])
    col = lambda k: np.array([float(r[k]) for r in rows])
    return EffCurve(col("lambda"), col("a_eff"), col("mu_max"), col("cond"),
                    [r["flag"] for r in rows], col("B") if has_B else None,
                    poles, poles_U, [], digest, solver)


def _jsonable(x):
    if isinstance(x, float) and not np.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    return x


def write_json(reports, path, digest: str = "", solver=None, fit: FeshbachFit | None = None) -> str:
    doc = {
        "schema": SCHEMA,
        "config_sha256": digest,
        "solver": solver or {},
        "sign_convention": SIGN_CONVENTION,
        "reports": [r.as_dict() for r in reports],
    }
    if fit is not None:
        doc["fit"] = fit.as_dict()
    try:
        with open(path, "w") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return str(path)


def write_svg(curve: EffCurve, path, use_field: bool = False) -> str:
    from .plotting import render_curve_svg

    if use_field and curve.B is not None:
        x, xlabel = curve.B, "B"
        slope = (curve.B[-1] - curve.B[0]) / (curve.lam[-1] - curve.lam[0])
        poles = [curve.B[0] + slope * (l - curve.lam[0]) for l, _ in curve.poles]
    else:
        x, xlabel = curve.lam, r"$\lambda$"
        poles = [l for l, _ in curve.poles]
    try:
        render_curve_svg(x, curve.a_eff, path, poles=poles, xlabel=xlabel,
                         title=f"config {curve.digest}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return str(path)


def export(curve: EffCurve, out_dir, formats=("csv", "json", "svg"), fit=None) -> list:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        written.append(write_csv(curve, os.path.join(out_dir, "curve.csv")))
    if "json" in formats:
        written.append(write_json(curve.reports, os.path.join(out_dir, "reports.json"),
                                  curve.digest, curve.solver, fit))
    if "svg" in formats:
        written.append(write_svg(curve, os.path.join(out_dir, "curve.svg")))
    return written
