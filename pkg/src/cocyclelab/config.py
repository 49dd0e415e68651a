"""Run configuration: YAML ingestion, validation and defaults.

A config is a mapping with sections ``model``, ``nonlinearity``, ``forcing``,
``analysis`` and ``output`` plus a top-level ``seed``.  Unknown keys are
rejected; every violation found is reported at once.
"""
import dataclasses
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .cocycle import Forcing, Nonlinearity, PeriodicSignal
from .discretization import DELAY_SCHEMES, DelayParams, ParabolicParams, SampledFunction
from .errors import CocycleLabError, ParseError, ValidationError


@dataclass
class ModelSection:
    kind: str = "delay"
    # delay
    lam: float = None
    b: float = 1.0
    tau: float = None
    n_grid: int = 64
    scheme: str = "upwind2"
    # parabolic
    alpha: float = None
    beta: float = None
    n_modes: int = 16
    n_quad: int = 0
    # kernel (delay) or weight (parabolic): {constant: c} or {nodes: [...], values: [...]}
    rho: dict = None


@dataclass
class NonlinearitySection:
    kind: str = "sigmoid"
    b1: object = None
    b2: object = 0.0
    slope: float = 0.0
    cap: float = None
    nodes: list = None
    values: list = None
    mu0: float = None


@dataclass
class ForcingSection:
    sigma: float = 1.0
    g: object = 0.0
    profile: dict = None


@dataclass
class AnalysisSection:
    nu: float = None
    mu0: float = None
    delta_seed: float = None
    theorem_mode: bool = True
    omega_max: float = 1e3
    n_omega: int = 2048
    dt: float = None
    substeps: int = 1
    initial_amplitude: float = 2.0
    n_random: int = 8
    periodic_periods: int = 600
    tol_periodic_rel: float = 1e-7
    simulate_periods: int = 20
    squeeze_pairs: int = 10
    squeeze_samples: int = 200
    squeeze_periods: int = 10
    tol_fibre: float = 1e-6
    tol_shoot: float = 1e-10
    back_periods: int = 3
    n_zeta: int = 9
    zeta_span: float = 3.0
    attraction_periods: int = 10
    attraction_back_periods: int = 12
    attraction_perturbation: float = 1.0
    stability_probes: int = 6
    stability_radius: float = 1e-3
    stability_time: float = 20.0


@dataclass
class OutputSection:
    dir: str = "out"
    formats: list = field(default_factory=lambda: ["json", "csv"])


@dataclass
class RunConfig:
    model: ModelSection
    nonlinearity: NonlinearitySection
    forcing: ForcingSection
    analysis: AnalysisSection
    output: OutputSection
    seed: int = 0

    def to_dict(self):
        return dataclasses.asdict(self)

    def dump(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    # -- builders -----------------------------------------------------------

    def sampled_rho(self):
        m = self.model
        a, b = (-m.tau, 0.0) if m.kind == "delay" else (0.0, 1.0)
        return _sampled(m.rho, a, b)

    def params(self):
        m = self.model
        if m.kind == "delay":
            return DelayParams(m.lam, m.b, m.tau, self.sampled_rho(), m.n_grid, m.scheme)
        return ParabolicParams(m.alpha, m.beta, self.sampled_rho(), m.n_modes, m.n_quad)

    def nonlinearity_obj(self):
        s = self.nonlinearity
        sigma = self.forcing.sigma
        if s.kind == "sigmoid":
            return Nonlinearity("sigmoid", {"b1": _signal(s.b1, sigma), "b2": _signal(s.b2, sigma)}, s.mu0)
        if s.kind == "linear":
            return Nonlinearity("linear", {"slope": s.slope}, s.mu0)
        if s.kind == "saturating-linear":
            return Nonlinearity("saturating-linear", {"slope": s.slope, "cap": s.cap}, s.mu0)
        return Nonlinearity("custom-table", {"nodes": s.nodes, "values": s.values}, s.mu0)

    def forcing_obj(self):
        f = self.forcing
        profile = None if f.profile is None else _sampled(f.profile, 0.0, 1.0)
        return Forcing(_signal(f.g, f.sigma), profile)

    @property
    def mu0(self):
        return self.analysis.mu0 if self.analysis.mu0 is not None else self.nonlinearity_obj().mu0


def _sampled(entry, a, b):
    if "constant" in entry:
        return SampledFunction.constant(float(entry["constant"]), a, b)
    return SampledFunction(np.asarray(entry["nodes"], dtype=float), np.asarray(entry["values"], dtype=float))


def _signal(entry, sigma):
    if isinstance(entry, (int, float)):
        return PeriodicSignal.constant(float(entry), sigma)
    table = entry.get("table")
    return PeriodicSignal(sigma=sigma, mean=float(entry.get("mean", 0.0)), cos=tuple(entry.get("cos", ())),
                          sin=tuple(entry.get("sin", ())), table=None if table is None else tuple(table))


SECTIONS = {"model": ModelSection, "nonlinearity": NonlinearitySection, "forcing": ForcingSection,
            "analysis": AnalysisSection, "output": OutputSection}
SIGNAL_KEYS = {"mean", "cos", "sin", "table"}
FUNCTION_KEYS = ({"constant"}, {"nodes", "values"})


def _check_function(entry, where, problems):
    if not isinstance(entry, dict) or set(entry) not in FUNCTION_KEYS:
        problems.append(f"{where}: expected {{constant: c}} or {{nodes: [...], values: [...]}}")
        return False
    return True


def _check_signal(entry, where, problems):
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return
    if not isinstance(entry, dict) or not set(entry) <= SIGNAL_KEYS:
        problems.append(f"{where}: expected a number or a mapping with keys {sorted(SIGNAL_KEYS)}")


def _section(name, raw, problems):
    cls = SECTIONS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"{name}: expected a mapping")
        return cls()
    names = {f.name for f in fields(cls)}
    for key in raw:
        if key not in names:
            problems.append(f"{name}.{key}: unknown key")
    return cls(**{k: v for k, v in raw.items() if k in names})


def _validate(cfg, problems):
    m, a, nl, fo = cfg.model, cfg.analysis, cfg.nonlinearity, cfg.forcing
    if m.kind not in ("delay", "parabolic"):
        problems.append("model.kind: must be 'delay' or 'parabolic'")
        return
    if m.rho is None:
        problems.append("model.rho: required")
    else:
        _check_function(m.rho, "model.rho", problems)
    if m.kind == "delay":
        for key in ("lam", "tau"):
            if getattr(m, key) is None:
                problems.append(f"model.{key}: required for delay models")
        if m.scheme not in DELAY_SCHEMES:
            problems.append(f"model.scheme: must be one of {list(DELAY_SCHEMES)}")
    else:
        for key in ("alpha", "beta"):
            if getattr(m, key) is None:
                problems.append(f"model.{key}: required for parabolic models")
    if a.nu is None:
        problems.append("analysis.nu: required")
    elif a.nu < 0:
        problems.append("analysis.nu: must be >= 0")
    elif m.kind == "delay" and m.lam is not None and abs(a.nu - m.lam) < 1e-12:
        problems.append("analysis.nu: must differ from model.lam for delay models (nu != lambda)")
    elif (m.kind == "parabolic" and a.theorem_mode and None not in (m.alpha, m.beta)
          and not (m.beta < a.nu < m.beta + np.pi ** 2 * m.alpha)):
        problems.append(f"analysis.nu: theorem mode requires beta < nu < beta + pi^2 alpha "
                        f"= ({m.beta}, {m.beta + np.pi ** 2 * m.alpha:.6g})")
    if m.kind == "parabolic" and a.dt is None:
        problems.append("analysis.dt: required for parabolic models")
    if a.mu0 is not None and not a.mu0 > 0:
        problems.append("analysis.mu0: must be > 0")
    if not fo.sigma or fo.sigma <= 0:
        problems.append("forcing.sigma: must be > 0")
    _check_signal(fo.g, "forcing.g", problems)
    if fo.profile is not None:
        if m.kind == "delay":
            problems.append("forcing.profile: only parabolic models take a spatial profile")
        else:
            _check_function(fo.profile, "forcing.profile", problems)
    if nl.kind == "sigmoid":
        if nl.b1 is None:
            problems.append("nonlinearity.b1: required for sigmoid")
        else:
            _check_signal(nl.b1, "nonlinearity.b1", problems)
        _check_signal(nl.b2, "nonlinearity.b2", problems)
    elif nl.kind == "saturating-linear" and nl.cap is None:
        problems.append("nonlinearity.cap: required for saturating-linear")
    elif nl.kind == "custom-table" and (nl.nodes is None or nl.values is None):
        problems.append("nonlinearity.nodes/values: required for custom-table")
    elif nl.kind not in ("sigmoid", "linear", "saturating-linear", "custom-table"):
        problems.append("nonlinearity.kind: unknown")
    for key in ("n_random", "squeeze_pairs", "squeeze_samples", "n_zeta", "stability_probes"):
        if getattr(a, key) < 1:
            problems.append(f"analysis.{key}: must be >= 1")
    if a.back_periods < 3:
        problems.append("analysis.back_periods: must be >= 3")
    if a.periodic_periods < 20:
        problems.append("analysis.periodic_periods: must be >= 20")
    if problems:
        return
    # build objects so parameter-level errors surface as violations too
    for what, build in (("model", cfg.params), ("nonlinearity", cfg.nonlinearity_obj),
                        ("forcing", cfg.forcing_obj)):
        try:
            build()
        except (CocycleLabError, KeyError, TypeError, ValueError) as exc:
            problems.append(f"{what}: {exc}")


def config_from_dict(raw):
    problems = []
    if not isinstance(raw, dict):
        raise ValidationError(["top level: expected a mapping"])
    for key in raw:
        if key not in SECTIONS and key != "seed":
            problems.append(f"{key}: unknown section")
    sections = {name: _section(name, raw.get(name), problems) for name in SECTIONS}
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        problems.append("seed: must be an integer")
        seed = 0
    cfg = RunConfig(seed=seed, **sections)
    if not problems:
        _validate(cfg, problems)
    if problems:
        raise ValidationError(problems)
    return cfg


def parse_config(path):
    """Read and validate a YAML run config."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"malformed config: {getattr(exc, 'problem', exc)}",
                         line=None if mark is None else mark.line + 1) from exc
    return config_from_dict(raw or {})
