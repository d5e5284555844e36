"""Experiment drivers behind the command line: configs, moment runs and
convergence studies."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .elliptic import EllipticContext
from .errors import ConfigError, DomainError
from .height_stats import (MomentReport, exact_H2, exact_moment, heights_along, mc_moments)
from .kasteleyn import (CouplingTable, KasteleynSystem, assemble, extract_components, invert)
from .lattice import (TOP, CylinderDomain, build_staircase_cylinder, build_straight_cylinder,
                      dual_path, parse_domain_text)
from .prediction import (CylinderGeometry, F2_pred, cumulant_pred, h2_pred, moments_from_cumulants,
                         mu_distance, mu_from_moments)
from .sampling import sample_covers

THREADS_ENV = "DIMERCYL_THREADS"
KINDS = ("validate", "sample", "moments", "couplings", "predict", "convergence")
DEFAULT_POINTS = ((0.2, 0.35), (0.55, 0.65))


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive")
    return n


# ---------------------------------------------------------------- config

def domain_from_entry(entry, check: bool = True) -> CylinderDomain:
    """Domain from a config entry: a dict of domain keys, or a path to a domain file."""
    if isinstance(entry, str):
        try:
            with open(entry) as fh:
                return parse_domain_text(fh.read(), check)
        except OSError as exc:
            raise ConfigError(f"cannot read domain file: {exc}") from None
    if not isinstance(entry, dict):
        raise ConfigError("domain must be a table of keys or a file path")
    unknown = set(entry) - {"width", "height", "bottom_profile", "top_profile", "cut_column"}
    if unknown:
        raise ConfigError(f"unknown domain keys: {sorted(unknown)}")
    if "width" not in entry:
        raise ConfigError("domain needs a width")
    cut = int(entry.get("cut_column", 0))
    w = int(entry["width"])
    if "height" in entry:
        h = int(entry["height"])
        if not check:
            return CylinderDomain(w, (0,) * w, (h,) * w, cut)
        return build_straight_cylinder(w, h, cut)
    if "bottom_profile" not in entry or "top_profile" not in entry:
        raise ConfigError("domain needs height or both profiles")
    if not check:
        return CylinderDomain(w, tuple(entry["bottom_profile"]), tuple(entry["top_profile"]), cut)
    return build_staircase_cylinder(w, entry["bottom_profile"], entry["top_profile"], cut)


@dataclass
class ExperimentConfig:
    kind: str
    domain: CylinderDomain | None = None
    n_samples: int = 0
    seed: int | None = None
    out: str | None = None
    threads: int = 1
    widths: tuple = ()
    aspect: int = 2
    points: tuple = DEFAULT_POINTS
    ell: float | None = None
    mu: float | None = None
    M2: float | None = None
    M3: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.n_samples < 0:
            raise ConfigError("n_samples must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.seed is not None and not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if (self.kind == "sample" or self.n_samples > 0) and self.seed is None:
            raise ConfigError("stochastic experiments need a seed")
        if self.kind in ("validate", "sample", "moments", "couplings") and self.domain is None:
            raise ConfigError(f"{self.kind} needs a domain")
        if self.kind == "convergence":
            ws = list(self.widths)
            if len(ws) < 2:
                raise ConfigError("convergence needs at least two widths")
            if any(b <= a for a, b in zip(ws, ws[1:])):
                raise ConfigError("widths must be strictly increasing")
            if any(w % (2 * self.aspect) for w in ws):
                raise ConfigError("every width must be divisible by 2 * aspect")
            if len(self.points) != 2:
                raise ConfigError("convergence needs exactly two points")
            for x, y in self.points:
                if not (0 <= x < 1 and 0 < y < 1):
                    raise ConfigError("points are (x, y/height) with 0 <= x < 1, 0 < y < 1")
        if self.kind == "predict":
            if self.ell is None:
                raise ConfigError("predict needs ell")
            if self.mu is None and (self.M2 is None or self.M3 is None):
                raise ConfigError("predict needs mu or both M2 and M3")

    @classmethod
    def from_dict(cls, raw: dict, **overrides) -> "ExperimentConfig":
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in raw:
            raise ConfigError("config needs a kind")
        kw = dict(raw)
        if "domain" in kw and not isinstance(kw["domain"], CylinderDomain):
            kw["domain"] = domain_from_entry(kw["domain"], check=kw["kind"] != "validate")
        try:
            for key in ("n_samples", "seed", "threads", "aspect"):
                if kw.get(key) is not None:
                    kw[key] = int(kw[key])
            for key in ("ell", "mu", "M2", "M3"):
                if kw.get(key) is not None:
                    kw[key] = float(kw[key])
            if "widths" in kw:
                kw["widths"] = tuple(int(w) for w in kw["widths"])
            if "points" in kw:
                kw["points"] = tuple((float(x), float(y)) for x, y in kw["points"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config value: {exc}") from None
        return cls(**kw)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(raw, **overrides)


# ---------------------------------------------------------------- moments

def _solve(domain: CylinderDomain) -> tuple[KasteleynSystem, CouplingTable]:
    system = assemble(domain)
    return system, invert(system)


def top_heights(system: KasteleynSystem, table: CouplingTable, n_samples: int, seed: int,
                threads: int = 1) -> np.ndarray:
    d = system.domain
    covers = sample_covers(system, table, n_samples, seed, threads=threads)
    return heights_along(d, covers, [dual_path(d, TOP)])[:, 0]


@dataclass
class PredictionComparison:
    ell: float
    mu: float
    z_mu: tuple
    fit_residual_M2: float
    fit_residual_M3: float
    cumulants: dict
    predicted: dict
    z_scores: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def compare_moments(report: MomentReport, ell: float) -> PredictionComparison:
    """Fit mu to the exact (M2, M3) and predict higher moments from the elliptic cumulants."""
    ctx = EllipticContext(ell)
    mp = mu_from_moments(report.M2, report.M3, ctx)
    cum = {n: cumulant_pred(n, mp.mu, ctx) for n in range(2, 7)}
    mom = moments_from_cumulants(cum)
    z = {}
    if report.M4 is not None and report.se4:
        z["M4"] = (report.M4 - mom[4]) / report.se4
    return PredictionComparison(
        ell, mp.mu, (mp.z_mu.real, mp.z_mu.imag), mp.residual_M2, mp.residual_M3,
        {f"k{n}": v for n, v in cum.items()}, {f"M{n}": v for n, v in mom.items()}, z)


def run_moments(config: ExperimentConfig):
    """Exact M2, M3, optional Monte Carlo M4, and the elliptic comparison."""
    d = config.domain
    system, table = _solve(d)
    rep = MomentReport(d.hash, d.delta, "exact_determinantal",
                       M2=exact_moment(system, table, 2), M3=exact_moment(system, table, 3),
                       se2=0.0, se3=0.0)
    if config.n_samples:
        h = top_heights(system, table, config.n_samples, config.seed, config.threads)
        mc = mc_moments(h, (2, 3, 4))
        rep.method = "exact_determinantal+monte_carlo"
        rep.M4, rep.se4 = mc[4]
        rep.n_samples = config.n_samples
        rep.seed = config.seed
        rep.extra["mc_M2"], rep.extra["mc_se2"] = mc[2]
        rep.extra["mc_M3"], rep.extra["mc_se3"] = mc[3]
    ell = config.ell
    if ell is None and d.is_straight:
        ell = CylinderGeometry.from_domain(d).ell
    comparison = compare_moments(rep, ell) if ell is not None else None
    return rep, comparison


# ---------------------------------------------------------------- convergence

def probe_face(domain: CylinderDomain, point) -> tuple:
    """Face nearest to (x, y * height) among squares with odd column and even row,
    so the site pairs have the same layout on every mesh."""
    target = complex(point[0], point[1] * domain.continuum_height)
    cands = [f for f in domain.faces[2:] if f[0] % 2 == 1 and f[1] % 2 == 0]
    return min(cands, key=lambda f: abs(domain.face_center(f) - target))


def site_pairs(face) -> tuple[list, list]:
    """(W0, W1) and (B0, B1) corners of a square with odd column and even row."""
    c, r = face
    return [(c, r), (c + 1, r + 1)], [(c, r + 1), (c + 1, r)]


@dataclass
class MeshResult:
    width: int
    height: int
    faces: tuple
    z: tuple
    M2: float
    M3: float
    mu: float
    H2: float
    H2_pred: float
    F2: complex
    F2_pred: complex

    @property
    def H2_error(self) -> float:
        return abs(self.H2 - self.H2_pred) / abs(self.H2_pred)

    @property
    def F2_error(self) -> float:
        return abs(self.F2 - self.F2_pred) / abs(self.F2_pred)


def mesh_study(width: int, height: int, points=DEFAULT_POINTS) -> MeshResult:
    d = build_straight_cylinder(width, height)
    system, table = _solve(d)
    geom = CylinderGeometry.from_domain(d)
    ctx = geom.ctx
    M2 = exact_moment(system, table, 2)
    M3 = exact_moment(system, table, 3)
    mu = mu_from_moments(M2, M3, ctx).mu
    f1, f2 = (probe_face(d, p) for p in points)
    z1, z2 = (geom.to_T(d.face_center(f)) for f in (f1, f2))
    H2 = exact_H2(system, table, f1, f2)
    (w1, b1), (w2, b2) = site_pairs(f1), site_pairs(f2)
    F2 = extract_components(table, w1, b2).F_pp * extract_components(table, w2, b1).F_pp
    return MeshResult(width, height, (f1, f2), (z1, z2), M2, M3, mu, H2,
                      h2_pred(z1, z2, M2, geom), F2, geom.ell ** 2 * F2_pred(1, 1, z1, z2, mu, ctx))


def strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


@dataclass
class ConvergenceResult:
    meshes: list

    @property
    def H2_errors(self) -> list:
        return [m.H2_error for m in self.meshes]

    @property
    def F2_errors(self) -> list:
        return [m.F2_error for m in self.meshes]

    @property
    def mus(self) -> list:
        return [m.mu for m in self.meshes]

    @property
    def mu_spread(self) -> float:
        return max(mu_distance(a, b) for a in self.mus for b in self.mus)

    def flags(self) -> dict:
        """Non-fatal diagnostics: False marks an error sequence that did not decrease."""
        return {"H2_decreasing": strictly_decreasing(self.H2_errors),
                "F2_decreasing": strictly_decreasing(self.F2_errors)}

    def rows(self) -> list:
        out = []
        for m in self.meshes:
            base = {"W": m.width, "H": m.height, "delta": 1.0 / m.width}
            out.append({**base, "quantity": "H2", "value": m.H2, "error": m.H2_error,
                        "prediction": m.H2_pred, "residual": m.H2 - m.H2_pred})
            for part in ("real", "imag"):
                v, p = getattr(m.F2, part), getattr(m.F2_pred, part)
                out.append({**base, "quantity": f"F2pp_{part[:2]}", "value": v, "error": m.F2_error,
                            "prediction": p, "residual": v - p})
            out.append({**base, "quantity": "mu", "value": m.mu, "error": self.mu_spread,
                        "prediction": math.nan, "residual": math.nan})
            out.append({**base, "quantity": "M2", "value": m.M2, "error": 0.0,
                        "prediction": math.nan, "residual": math.nan})
            out.append({**base, "quantity": "M3", "value": m.M3, "error": 0.0,
                        "prediction": math.nan, "residual": math.nan})
        return out


CSV_COLUMNS = ("W", "H", "delta", "quantity", "value", "error", "prediction", "residual")


def write_convergence_csv(result: ConvergenceResult, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        wr.writeheader()
        for row in result.rows():
            wr.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})


def run_convergence(config: ExperimentConfig) -> ConvergenceResult:
    meshes = []
    for w in config.widths:
        if w // config.aspect < 2:
            raise DomainError(f"width {w} too small for aspect {config.aspect}")
        meshes.append(mesh_study(w, w // config.aspect, config.points))
    return ConvergenceResult(meshes)
