"""Model description: potentials, coupling, grid, scan range and B-field map.

Configs are TOML documents::

    [potential_U]
    shape = "square-well"
    depth = 10.0          # attractive well, U = -10 for r < 1
    range = 1.0

    [potential_V]
    shape = "gaussian"
    amplitude = 2.0       # signed value at the origin
    range = 1.0

    [coupling]
    kind = "separable"    # or "local"
    shape = "gaussian"
    amplitude = 0.3
    range = 1.0

    [grid]
    r_max = 5.0
    panels = 40
    nodes_per_panel = 10

    [scan]
    lambda_min = 0.5
    lambda_max = 20.0
    points = 200

    [magnetic_map]        # optional: lambda(B) = lambda_ref + slope * (B - b_ref)
    lambda_ref = 5.0
    slope = 0.1
    b_ref = 800.0

    [tolerances]
    tail_tol = 1e-6

A potential is given either by a signed ``amplitude`` or by a non-negative
``depth`` together with ``sign`` ("attractive", the default, or "repulsive").
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import asdict, dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .potentials import SHAPES, PotentialError, PotentialSpec


class ConfigError(ValueError):
    """Schema or invariant violation in a model config."""


@dataclass(frozen=True)
class CouplingSpec:
    """Inter-channel coupling W.

    ``local`` multiplies by W(r) = profile(r); ``separable`` is the rank-one
    operator |w><w| with w(r) = profile(r).
    """

    kind: str = "local"
    profile: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        if self.kind not in ("local", "separable"):
            raise ConfigError(f"coupling kind must be 'local' or 'separable', got {self.kind!r}")
        if self.kind == "separable" and self.profile.is_zero:
            raise ConfigError("separable coupling profile must not vanish identically")

    def scaled(self, eps: float) -> "CouplingSpec":
        """Coupling with W -> eps * W (eps > 0)."""
        if eps <= 0:
            raise ValueError("scale must be positive")
        factor = eps if self.kind == "local" else eps ** 0.5
        return replace(self, profile=self.profile.scaled(factor))


@dataclass(frozen=True)
class MagneticMap:
    """Affine field map lambda(B) = lambda_ref + slope * (B - b_ref)."""

    lambda_ref: float
    slope: float
    b_ref: float

    def __post_init__(self):
        if self.slope == 0:
            raise ConfigError("magnetic_map.slope must be non-zero")

    def to_lambda(self, B):
        return self.lambda_ref + self.slope * (B - self.b_ref)

    def to_field(self, lam):
        return self.b_ref + (lam - self.lambda_ref) / self.slope


@dataclass(frozen=True)
class Tolerances:
    tail_tol: float = 1e-6
    cond_max: float = 1e12
    root_xtol: float = 1e-10
    pole_window: float = 1e-4
    imag_tol: float = 1e-8
    refine_threshold: float = 1.0
    max_refinements: int = 4


@dataclass(frozen=True)
class ModelConfig:
    potential_U: PotentialSpec
    potential_V: PotentialSpec
    coupling: CouplingSpec
    r_max: float
    panels: int = 40
    nodes_per_panel: int = 10
    lambda_range: tuple = (0.5, 20.0)
    points: int = 200
    magnetic_map: MagneticMap | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        lo, hi = self.lambda_range
        if not (lo > 0 and hi > 0):
            raise ConfigError("lambda_range must be positive")
        if not hi > lo:
            raise ConfigError("lambda_range must satisfy lambda_min < lambda_max")
        reach = max(p.extent for p in self.potentials() if not p.is_zero) \
            if any(not p.is_zero for p in self.potentials()) else 0.0
        if not self.r_max > reach:
            raise ConfigError(f"grid.r_max must exceed the largest potential range ({reach})")
        if self.panels < 4 or self.nodes_per_panel < 4:
            raise ConfigError("grid.panels and grid.nodes_per_panel must be >= 4")
        if self.points < 2:
            raise ConfigError("scan.points must be >= 2")

    def potentials(self):
        return (self.potential_U, self.potential_V, self.coupling.profile)

    @property
    def breakpoints(self) -> tuple:
        return tuple(sorted({b for p in self.potentials() for b in p.breakpoints}))

    def with_coupling(self, coupling: CouplingSpec) -> "ModelConfig":
        return replace(self, coupling=coupling)

    def digest(self) -> str:
        """Short hash of the canonical serialization, stamped on every output."""
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing


_POT_KEYS = {"shape", "amplitude", "depth", "sign", "range", "width", "table_r", "table_v"}


def _key_line(text: str, section: str | None, key: str | None) -> int | None:
    lines = text.splitlines()
    in_section = section is None
    for no, line in enumerate(lines, start=1):
        stripped = line.strip()
        head = re.match(r"^\[([^\]]+)\]", stripped)
        if head:
            if section is not None and head.group(1).strip() == section:
                if key is None:
                    return no
                in_section = True
            else:
                in_section = section is None
            continue
        if in_section and key is not None and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return no
    return None


def _fail(text, section, key, msg):
    line = _key_line(text, section, key)
    where = f"{section}.{key}" if key else section
    loc = f" (line {line})" if line else ""
    raise ConfigError(f"{where}{loc}: {msg}")


def _number(text, section, table, key, default=None, kind=float):
    if key not in table:
        if default is None:
            _fail(text, section, key, "missing required key")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _fail(text, section, key, f"expected a number, got {val!r}")
    if kind is int:
        if isinstance(val, float) and not val.is_integer():
            _fail(text, section, key, "expected an integer")
        return int(val)
    return float(val)


def _potential(text, section, table) -> PotentialSpec:
    unknown = set(table) - _POT_KEYS - ({"kind"} if section == "coupling" else set())
    if unknown:
        _fail(text, section, sorted(unknown)[0], "unknown key")
    shape = table.get("shape", "zero")
    if shape not in SHAPES:
        _fail(text, section, "shape", f"unknown shape {shape!r}; expected one of {SHAPES}")
    if "amplitude" in table and "depth" in table:
        _fail(text, section, "depth", "give either amplitude or depth, not both")
    if "range" in table and "width" in table:
        _fail(text, section, "width", "give either range or width, not both")
    if "depth" in table:
        depth = _number(text, section, table, "depth")
        sign = table.get("sign", "attractive")
        if sign not in ("attractive", "repulsive"):
            _fail(text, section, "sign", "sign must be 'attractive' or 'repulsive'")
        amplitude = -abs(depth) if sign == "attractive" else abs(depth)
    else:
        amplitude = _number(text, section, table, "amplitude", 0.0)
        if "sign" in table:
            if table["sign"] not in ("attractive", "repulsive"):
                _fail(text, section, "sign", "sign must be 'attractive' or 'repulsive'")
            amplitude = -abs(amplitude) if table["sign"] == "attractive" else abs(amplitude)
    rkey = "width" if "width" in table else "range"
    rng = _number(text, section, table, rkey, 1.0)
    try:
        return PotentialSpec(
            shape,
            amplitude,
            rng,
            tuple(float(x) for x in table.get("table_r", ())),
            tuple(float(x) for x in table.get("table_v", ())),
        )
    except PotentialError as exc:
        _fail(text, section, rkey if "range" in str(exc) else "shape", str(exc))


_SECTIONS = {"potential_U", "potential_V", "coupling", "grid", "scan", "magnetic_map", "tolerances"}


def parse_config(text: str) -> ModelConfig:
    """Parse a TOML model description, filling defaults for omitted solver parameters."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for name in doc:
        if name not in _SECTIONS:
            _fail(text, name, None, "unknown section")
    for name in ("potential_U", "potential_V", "coupling"):
        if name not in doc:
            raise ConfigError(f"{name}: missing required section")

    U = _potential(text, "potential_U", doc["potential_U"])
    V = _potential(text, "potential_V", doc["potential_V"])
    ctab = doc["coupling"]
    kind = ctab.get("kind", "local")
    if kind not in ("local", "separable"):
        _fail(text, "coupling", "kind", "kind must be 'local' or 'separable'")
    profile = _potential(text, "coupling", ctab)
    if kind == "separable" and profile.is_zero:
        _fail(text, "coupling", "amplitude", "separable coupling profile must not vanish identically")
    coupling = CouplingSpec(kind, profile)

    g = doc.get("grid", {})
    for key in set(g) - {"r_max", "panels", "nodes_per_panel"}:
        _fail(text, "grid", key, "unknown key")
    reach = max([p.extent for p in (U, V, profile) if not p.is_zero] or [1.0])
    r_max = _number(text, "grid", g, "r_max", 5.0 * reach)
    panels = _number(text, "grid", g, "panels", 40, int)
    npp = _number(text, "grid", g, "nodes_per_panel", 10, int)

    s = doc.get("scan", {})
    for key in set(s) - {"lambda_min", "lambda_max", "points"}:
        _fail(text, "scan", key, "unknown key")
    lam_lo = _number(text, "scan", s, "lambda_min", 0.5)
    lam_hi = _number(text, "scan", s, "lambda_max", 20.0)
    if lam_lo <= 0 or lam_hi <= 0:
        _fail(text, "scan", "lambda_min" if lam_lo <= 0 else "lambda_max",
              "lambda_range must be positive")
    points = _number(text, "scan", s, "points", 200, int)

    mag = None
    if "magnetic_map" in doc:
        m = doc["magnetic_map"]
        for key in set(m) - {"lambda_ref", "slope", "b_ref"}:
            _fail(text, "magnetic_map", key, "unknown key")
        try:
            mag = MagneticMap(
                _number(text, "magnetic_map", m, "lambda_ref"),
                _number(text, "magnetic_map", m, "slope"),
                _number(text, "magnetic_map", m, "b_ref"),
            )
        except ConfigError as exc:
            _fail(text, "magnetic_map", "slope", str(exc))

    t = doc.get("tolerances", {})
    tol_kwargs = {}
    for f in fields(Tolerances):
        if f.name in t:
            tol_kwargs[f.name] = _number(text, "tolerances", t, f.name,
                                         kind=int if f.type in ("int", int) else float)
    for key in set(t) - {f.name for f in fields(Tolerances)}:
        _fail(text, "tolerances", key, "unknown key")

    try:
        return ModelConfig(U, V, coupling, r_max, panels, npp, (lam_lo, lam_hi), points,
                           mag, Tolerances(**tol_kwargs))
    except ConfigError as exc:
        msg = str(exc)
        section, key = ("grid", "r_max") if "r_max" in msg else ("grid", "panels")
        if "lambda" in msg:
            section, key = "scan", "lambda_min"
        elif "points" in msg:
            section, key = "scan", "points"
        _fail(text, section, key, msg)


def _potential_table(p: PotentialSpec) -> dict:
    out = {"shape": p.shape, "amplitude": p.amplitude, "range": p.range}
    if p.shape == "tabulated":
        out["table_r"] = list(p.table_r)
        out["table_v"] = list(p.table_v)
    return out


def serialize_config(cfg: ModelConfig) -> str:
    """Canonical TOML text; parse_config(serialize_config(c)) == c."""
    doc = {
        "potential_U": _potential_table(cfg.potential_U),
        "potential_V": _potential_table(cfg.potential_V),
        "coupling": {"kind": cfg.coupling.kind, **_potential_table(cfg.coupling.profile)},
        "grid": {"r_max": cfg.r_max, "panels": cfg.panels, "nodes_per_panel": cfg.nodes_per_panel},
        "scan": {"lambda_min": cfg.lambda_range[0], "lambda_max": cfg.lambda_range[1],
                 "points": cfg.points},
        "tolerances": asdict(cfg.tolerances),
    }
    if cfg.magnetic_map is not None:
        doc["magnetic_map"] = asdict(cfg.magnetic_map)
    return tomli_w.dumps(doc)


def load_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
