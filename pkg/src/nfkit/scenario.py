"""Scenario files: one YAML document per run.

A scenario gathers everything a solver or Monte Carlo run needs: the drift
basis, the coupling strength, the Gaussian input model, the time grid, the
state grid, closure order, output times, and Monte Carlo settings.  Parsing
validates the whole document and reports every violation at once;
serialization round-trips exactly.

Layout::

    name: linear-baseline
    kappa: 1.0
    drift:
      basis:
        - {coefficient: -1.0, function: x}
    time: {t0: 0.0, t_end: 1.0, n_points: 201}
    input_model:
      mean_x0: 0.5
      var_x0: 0.2
      mean_xi: {form: sinusoid, amplitude: 0.5, frequency: 1.0}
      kernel: {family: exponential, sigma2: 1.0, tau: 1.0}
      cross: {form: expdecay, amplitude: 0.2, rate: 1.0}
    pdf_grid: {x_min: -7.0, x_max: 8.0, n_x: 1024}      # optional
    solver: {closure_order: 2, output_times: [0.5, 1.0]} # optional
    mc: {n_paths: 100000, seed: 42, estimator: gaussian_kde}  # optional
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .gaussian_model import GaussianInputModel, KernelSpec
from .genfpk_solver import DriftSpec
from .grids import PdfGrid, TimeGrid

TIME_FUNCTION_FORMS = ("zero", "constant", "sinusoid", "expdecay")
ESTIMATORS = ("histogram", "gaussian_kde")


@dataclass(frozen=True)
class TimeFunction:
    """Serializable scalar function of time used for means and cross terms.

    Forms: ``zero``; ``constant`` (value); ``sinusoid``
    (amplitude cos(frequency t + phase)); ``expdecay``
    (amplitude exp(-rate t)).
    """

    form: str
    value: float = 0.0
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    rate: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.form == "zero":
            return np.zeros_like(t)
        if self.form == "constant":
            return np.full_like(t, self.value)
        if self.form == "sinusoid":
            return self.amplitude * np.cos(self.frequency * t + self.phase)
        if self.form == "expdecay":
            return self.amplitude * np.exp(-self.rate * t)
        raise ValueError(f"unknown time function form {self.form!r}")

    def as_dict(self) -> dict:
        if self.form == "zero":
            return {"form": "zero"}
        if self.form == "constant":
            return {"form": "constant", "value": self.value}
        if self.form == "sinusoid":
            return {"form": "sinusoid", "amplitude": self.amplitude,
                    "frequency": self.frequency, "phase": self.phase}
        return {"form": "expdecay", "amplitude": self.amplitude, "rate": self.rate}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, fully resolved run description."""

    name: str
    drift: DriftSpec
    kappa: float
    input_model: GaussianInputModel
    time_grid: TimeGrid
    pdf_grid: PdfGrid | None
    closure_order: int
    output_times: tuple[float, ...]
    tolerances: dict
    n_paths: int
    seed: int
    estimator: str
    kernel_csv: str | None = None

    @property
    def model(self) -> GaussianInputModel:
        return self.input_model

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return serialize(self) == serialize(other)

    def __hash__(self):
        return hash(serialize(self))


def _fail(violations: list, field: str, message: str):
    violations.append(f"{field}: {message}")


def _number(raw, field: str, violations: list) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        _fail(violations, field, f"must be a number, got {raw!r}")
        return float("nan")
    v = float(raw)
    if not np.isfinite(v):
        _fail(violations, field, "must be finite")
    return v


def _integer(raw, field: str, violations: list) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        _fail(violations, field, f"must be an integer, got {raw!r}")
        return 0
    return raw


def _section(doc: dict, key: str, required: bool = True) -> dict | None:
    if key not in doc:
        if required:
            raise ParseError(f"missing required section {key!r}")
        return None
    sec = doc[key]
    if not isinstance(sec, dict):
        raise ParseError(f"section {key!r} must be a mapping")
    return sec


def _get(sec: dict, key: str, section_name: str):
    if key not in sec:
        raise ParseError(f"section {section_name!r} is missing key {key!r}")
    return sec[key]


def _time_function(raw, field: str, violations: list) -> TimeFunction:
    if not isinstance(raw, dict):
        raise ParseError(f"{field} must be a mapping with a 'form' key")
    form = raw.get("form")
    if form not in TIME_FUNCTION_FORMS:
        _fail(violations, f"{field}.form", f"must be one of {TIME_FUNCTION_FORMS}, got {form!r}")
        return TimeFunction("zero")
    kwargs = {}
    allowed = {
        "zero": (),
        "constant": ("value",),
        "sinusoid": ("amplitude", "frequency", "phase"),
        "expdecay": ("amplitude", "rate"),
    }[form]
    for k in raw:
        if k == "form":
            continue
        if k not in allowed:
            _fail(violations, f"{field}.{k}", f"not a parameter of form {form!r}")
            continue
        kwargs[k] = _number(raw[k], f"{field}.{k}", violations)
    return TimeFunction(form, **kwargs)


def _kernel(raw, base_dir: str, violations: list) -> tuple[KernelSpec | None, str | None]:
    if not isinstance(raw, dict):
        raise ParseError("input_model.kernel must be a mapping with a 'family' key")
    family = raw.get("family")
    if family in ("exponential", "squared_exponential"):
        sigma2 = _number(raw.get("sigma2", 1.0), "input_model.kernel.sigma2", violations)
        tau = _number(raw.get("tau", 1.0), "input_model.kernel.tau", violations)
        if np.isfinite(sigma2) and sigma2 < 0.0:
            _fail(violations, "input_model.kernel.sigma2", "must be >= 0")
            return None, None
        if np.isfinite(tau) and tau <= 0.0:
            _fail(violations, "input_model.kernel.tau", "must be > 0")
            return None, None
        if violations:
            return None, None
        maker = KernelSpec.exponential if family == "exponential" else KernelSpec.squared_exponential
        return maker(sigma2=sigma2, tau=tau), None
    if family == "table":
        path = raw.get("csv")
        if not isinstance(path, str):
            _fail(violations, "input_model.kernel.csv", "table kernels need a csv path")
            return None, None
        resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.exists(resolved):
            _fail(violations, "input_model.kernel.csv", f"file not found: {resolved}")
            return None, None
        return KernelSpec.from_csv(resolved), path
    _fail(violations, "input_model.kernel.family",
          f"must be one of ('exponential', 'squared_exponential', 'table'), got {family!r}")
    return None, None


def build_scenario(doc: dict, base_dir: str = ".") -> ScenarioConfig:
    """Validate a parsed mapping and assemble the config.

    Structural problems (missing sections/keys, wrong shapes) raise
    :class:`ParseError` immediately; value problems are collected and raised
    together as one :class:`ValidationError`.
    """
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a mapping")
    violations: list[str] = []

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ParseError("scenario needs a nonempty 'name'")
    kappa = _number(_get(doc, "kappa", "<top>"), "kappa", violations)

    drift_sec = _section(doc, "drift")
    basis_raw = _get(drift_sec, "basis", "drift")
    if not isinstance(basis_raw, list) or not basis_raw:
        raise ParseError("drift.basis must be a nonempty list")
    pairs = []
    from .genfpk_solver import DRIFT_FUNCTIONS

    for i, entry in enumerate(basis_raw):
        if not isinstance(entry, dict) or "coefficient" not in entry or "function" not in entry:
            raise ParseError(f"drift.basis[{i}] needs 'coefficient' and 'function' keys")
        coeff = _number(entry["coefficient"], f"drift.basis[{i}].coefficient", violations)
        fn = entry["function"]
        if fn not in DRIFT_FUNCTIONS:
            _fail(violations, f"drift.basis[{i}].function",
                  f"must be one of {sorted(DRIFT_FUNCTIONS)}, got {fn!r}")
            continue
        pairs.append((coeff, fn))
    if pairs and pairs[0][1] != "x":
        _fail(violations, "drift.basis[0].function", "the first basis function must be 'x'")

    time_sec = _section(doc, "time")
    t0 = _number(_get(time_sec, "t0", "time"), "time.t0", violations)
    t_end = _number(_get(time_sec, "t_end", "time"), "time.t_end", violations)
    n_points = _integer(_get(time_sec, "n_points", "time"), "time.n_points", violations)
    if n_points < 2:
        _fail(violations, "time.n_points", "must be >= 2")
    if np.isfinite(t0) and np.isfinite(t_end) and not t_end > t0:
        _fail(violations, "time.t_end", "must be > time.t0")

    im_sec = _section(doc, "input_model")
    mean_x0 = _number(_get(im_sec, "mean_x0", "input_model"), "input_model.mean_x0", violations)
    var_x0 = _number(_get(im_sec, "var_x0", "input_model"), "input_model.var_x0", violations)
    if np.isfinite(var_x0) and var_x0 < 0.0:
        _fail(violations, "input_model.var_x0", "must be >= 0")
    mean_xi = _time_function(_get(im_sec, "mean_xi", "input_model"), "input_model.mean_xi", violations)
    cross = _time_function(_get(im_sec, "cross", "input_model"), "input_model.cross", violations)
    kernel_violations: list[str] = []
    kernel, kernel_csv = _kernel(_get(im_sec, "kernel", "input_model"), base_dir, kernel_violations)
    violations.extend(kernel_violations)

    pg_sec = _section(doc, "pdf_grid", required=False)
    pdf_grid = None
    if pg_sec is not None:
        x_min = _number(_get(pg_sec, "x_min", "pdf_grid"), "pdf_grid.x_min", violations)
        x_max = _number(_get(pg_sec, "x_max", "pdf_grid"), "pdf_grid.x_max", violations)
        n_x = _integer(_get(pg_sec, "n_x", "pdf_grid"), "pdf_grid.n_x", violations)
        if not x_max > x_min:
            _fail(violations, "pdf_grid.x_max", "must be > pdf_grid.x_min")
        elif n_x < 16:
            _fail(violations, "pdf_grid.n_x", "must be >= 16")
        else:
            pdf_grid = PdfGrid(x_min=x_min, x_max=x_max, n_x=n_x)

    solver_sec = _section(doc, "solver", required=False) or {}
    closure_order = solver_sec.get("closure_order", 2)
    closure_order = _integer(closure_order, "solver.closure_order", violations)
    if closure_order < 0:
        _fail(violations, "solver.closure_order", "must be >= 0")
    outputs_raw = solver_sec.get("output_times")
    if outputs_raw is None:
        output_times = (t_end,) if np.isfinite(t_end) else ()
    else:
        if not isinstance(outputs_raw, list) or not outputs_raw:
            raise ParseError("solver.output_times must be a nonempty list")
        output_times = tuple(
            _number(v, f"solver.output_times[{i}]", violations) for i, v in enumerate(outputs_raw)
        )
        grid_ok = n_points >= 2 and np.isfinite(t0) and np.isfinite(t_end) and t_end > t0
        probe = TimeGrid.uniform(t0, t_end, n_points) if grid_ok else None
        for i, t in enumerate(output_times):
            if not np.isfinite(t):
                continue
            if np.isfinite(t0) and np.isfinite(t_end) and not t0 <= t <= t_end:
                _fail(violations, f"solver.output_times[{i}]", f"must lie in [{t0}, {t_end}]")
            elif probe is not None:
                try:
                    probe.index_of(t)
                except ValueError:
                    _fail(violations, f"solver.output_times[{i}]",
                          "must coincide with a time grid node (needed for ensemble comparisons)")
    tolerances = solver_sec.get("tolerances") or {}
    if not isinstance(tolerances, dict):
        raise ParseError("solver.tolerances must be a mapping")
    tolerances = {str(k): _number(v, f"solver.tolerances.{k}", violations) for k, v in tolerances.items()}

    mc_sec = _section(doc, "mc", required=False) or {}
    n_paths = _integer(mc_sec.get("n_paths", 10_000), "mc.n_paths", violations)
    if n_paths < 1:
        _fail(violations, "mc.n_paths", "must be >= 1")
    seed = _integer(mc_sec.get("seed", 0), "mc.seed", violations)
    if seed < 0:
        _fail(violations, "mc.seed", "must be >= 0")
    estimator = mc_sec.get("estimator", "gaussian_kde")
    if estimator not in ESTIMATORS:
        _fail(violations, "mc.estimator", f"must be one of {ESTIMATORS}, got {estimator!r}")

    if violations:
        raise ValidationError(violations)

    return ScenarioConfig(
        name=name,
        drift=DriftSpec.from_named(pairs),
        kappa=kappa,
        input_model=GaussianInputModel(
            m_x0=mean_x0, c_x0x0=var_x0, m_xi=mean_xi, kernel=kernel, cross=cross
        ),
        time_grid=TimeGrid.uniform(t0, t_end, n_points),
        pdf_grid=pdf_grid,
        closure_order=closure_order,
        output_times=output_times,
        tolerances=tolerances,
        n_paths=n_paths,
        seed=seed,
        estimator=estimator,
        kernel_csv=kernel_csv,
    )


def parse_scenario_text(text: str, base_dir: str = ".") -> ScenarioConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"scenario is not valid YAML: {exc}") from exc
    return build_scenario(doc, base_dir)


def parse_scenario(path: str) -> ScenarioConfig:
    """Read, parse, and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario_text(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _function_dict(fn) -> dict:
    if isinstance(fn, TimeFunction):
        return fn.as_dict()
    raise ValueError("only TimeFunction means/cross terms are serializable")


def serialize(cfg: ScenarioConfig) -> str:
    """Render the config back to scenario YAML; parse(serialize(cfg)) == cfg."""
    kernel = cfg.input_model.kernel
    if cfg.kernel_csv is not None:
        kernel_doc = {"family": "table", "csv": cfg.kernel_csv}
    elif kernel.family in ("exponential", "squared_exponential"):
        kernel_doc = {"family": kernel.family, "sigma2": kernel.sigma2, "tau": kernel.tau}
    else:
        raise ValueError("table kernels need the originating csv path to serialize")

    doc = {
        "name": cfg.name,
        "kappa": cfg.kappa,
        "drift": {
            "basis": [
                {"coefficient": term.coefficient, "function": term.name}
                for term in cfg.drift.terms
            ]
        },
        "time": {
            "t0": cfg.time_grid.t0,
            "t_end": cfg.time_grid.t_end,
            "n_points": cfg.time_grid.n_points,
        },
        "input_model": {
            "mean_x0": cfg.input_model.m_x0,
            "var_x0": cfg.input_model.c_x0x0,
            "mean_xi": _function_dict(cfg.input_model.m_xi),
            "kernel": kernel_doc,
            "cross": _function_dict(cfg.input_model.cross),
        },
        "solver": {
            "closure_order": cfg.closure_order,
            "output_times": list(cfg.output_times),
            "tolerances": dict(cfg.tolerances),
        },
        "mc": {"n_paths": cfg.n_paths, "seed": cfg.seed, "estimator": cfg.estimator},
    }
    if cfg.pdf_grid is not None:
        doc["pdf_grid"] = {
            "x_min": cfg.pdf_grid.x_min,
            "x_max": cfg.pdf_grid.x_max,
            "n_x": cfg.pdf_grid.n_x,
        }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
