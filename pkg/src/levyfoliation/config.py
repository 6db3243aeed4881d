"""Run configuration: a YAML document parsed into an immutable :class:`RunConfig`.

Example::

    system: example5            # or {preset: example5, epsilon: 0.2}, or explicit blocks
    noise: {alpha: 1.5, scale: 1.0}
    grid: {t_min: -60, t_max: 10, dt: 0.001, burn_in: 40, t_trunc: 40}
    lp: {eta: auto, tol: 1.0e-6, max_iter: 200, gap_override: false}
    experiments: [fiber, manifold, parallelism_check]
    sampling: {xi: [-3, -2, 0, 2, 3], base_points: [[1, 0]], seeds: [0, 1]}
    output: {dir: results}

An explicit system gives ``A``, ``B`` (row-major lists), ``a``, ``b`` and the
nonlinearities ``f``, ``g`` by registry name; ``K`` is optional.  The grid
window is the window of the noise realization; the driving path is sampled
``burn_in`` further into the past.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, LevyFoliationError
from .levy_path import StableParams, TimeGrid
from .lyapunov_perron import LPParams, gap_condition
from .nonlinear import build_nonlinearity
from .rds import SystemSpec, example5_system

__all__ = ["TASKS", "PRESETS", "RunConfig", "parse_config", "load_config", "preset_document"]

TASKS = ("fiber", "manifold", "stable_fiber", "decay_check", "invariance_check",
         "parallelism_check", "oracle_compare", "sublinear_report")
PRESETS = ("example5",)
_SECTIONS = ("system", "noise", "grid", "lp", "experiments", "sampling", "output")


@dataclass(frozen=True, eq=False)
class RunConfig:
    system: SystemSpec
    system_doc: dict
    noise: StableParams
    grid: TimeGrid
    burn_in: float
    lp: LPParams
    experiments: tuple
    xi: np.ndarray
    zeta: np.ndarray
    base_points: np.ndarray
    seeds: tuple
    tau: float = 1.0
    decay_horizon: float = 40.0
    sublinear_horizon: float = 800.0
    output_dir: str | None = None
    source: dict = field(default_factory=dict, repr=False)

    @property
    def preset_epsilon(self):
        """Coupling of the ``example5`` preset, or ``None`` for other systems."""
        doc = self.system_doc
        if doc.get("preset") == "example5":
            return float(doc.get("epsilon", 1.0))
        return None

    @property
    def path_grid(self) -> TimeGrid:
        """Grid of the driving path (realization window plus burn-in)."""
        g = self.grid
        nb = int(round(self.burn_in / g.dt))
        return TimeGrid.from_counts(g.n_neg + nb, g.n_pos, g.dt)

    def config_hash(self) -> str:
        blob = json.dumps(self.source, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_seed_offset(self, k: int) -> "RunConfig":
        import dataclasses
        return dataclasses.replace(self, seeds=tuple(s + k for s in self.seeds))

    def with_output(self, out: str) -> "RunConfig":
        import dataclasses
        return dataclasses.replace(self, output_dir=out)


def _section(doc, name, path=None):
    sec = doc.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError("must be a mapping", path or name)
    return sec


def _number(sec, key, default, path, cast=float):
    val = sec.get(key, default)
    if isinstance(val, bool):
        raise ConfigError(f"expected a number, got {val!r}", f"{path}.{key}")
    try:
        return cast(val)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {val!r}", f"{path}.{key}") from None


def _matrix(val, path):
    try:
        M = np.atleast_2d(np.asarray(val, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("expected a row-major list of numeric rows", path) from None
    if M.ndim != 2:
        raise ConfigError("expected a row-major list of numeric rows", path)
    return M


def _parse_system(doc, alpha):
    if isinstance(doc, str):
        doc = {"preset": doc}
    if not isinstance(doc, dict):
        raise ConfigError("must be a preset name or a mapping", "system")
    if "preset" in doc:
        name = doc["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}",
                              "system.preset")
        eps = _number(doc, "epsilon", 1.0, "system")
        try:
            return example5_system(eps, alpha), dict(doc)
        except LevyFoliationError as exc:
            raise ConfigError(str(exc), "system") from exc
    for key in ("A", "B", "a", "b"):
        if key not in doc:
            raise ConfigError("missing required field", f"system.{key}")
    A, B = _matrix(doc["A"], "system.A"), _matrix(doc["B"], "system.B")
    n, m = A.shape[0], B.shape[0]
    f = build_nonlinearity(doc.get("f", "zero"), n, m, n, "system.f")
    g = build_nonlinearity(doc.get("g", "zero"), n, m, m, "system.g")
    K = doc.get("K")
    try:
        spec = SystemSpec(A, B, _number(doc, "a", 0, "system"), _number(doc, "b", 0, "system"),
                          f, g, None if K is None else _number(doc, "K", 0, "system"), alpha,
                          name=str(doc.get("name", "custom")))
    except LevyFoliationError as exc:
        raise ConfigError(str(exc), "system") from exc
    return spec, dict(doc)


def _vectors(val, dim, path):
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a list of numbers or of vectors", path) from None
    if arr.ndim == 1 and dim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ConfigError(f"expected vectors of length {dim}", path)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("values must be finite", path)
    return arr


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run document.

    Raises
    ------
    ConfigError
        Syntax errors carry ``line``/``column`` (1-based); domain errors carry
        the dotted ``path`` of the offending field.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", line=line, column=col) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", "<root>")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}; allowed: {list(_SECTIONS)}", unknown[0])
    if "system" not in doc:
        raise ConfigError("missing required section", "system")

    noise = _section(doc, "noise")
    alpha = _number(noise, "alpha", 1.5, "noise")
    if not (1.0 < alpha < 2.0):
        raise ConfigError(f"alpha={alpha} must lie in the open interval (1, 2)", "noise.alpha")
    scale = _number(noise, "scale", 1.0, "noise")
    if not scale > 0:
        raise ConfigError("scale must be positive", "noise.scale")
    spec, system_doc = _parse_system(doc["system"], alpha)

    g = _section(doc, "grid")
    dt = _number(g, "dt", 1e-3, "grid")
    if not dt > 0:
        raise ConfigError("dt must be positive", "grid.dt")
    burn_in = _number(g, "burn_in", 40.0, "grid")
    if not burn_in > 0:
        raise ConfigError("burn_in must be positive", "grid.burn_in")
    try:
        grid = TimeGrid(_number(g, "t_min", -60.0, "grid"), _number(g, "t_max", 10.0, "grid"), dt)
        TimeGrid(-burn_in, 0.0, dt)
    except LevyFoliationError as exc:
        raise ConfigError(str(exc), "grid") from exc

    lp = _section(doc, "lp")
    eta = lp.get("eta", "auto")
    if eta in ("auto", None):
        eta = None
    else:
        eta = _number(lp, "eta", None, "lp")
        if not (spec.b < eta < spec.a):
            raise ConfigError(f"eta={eta} must lie strictly between b={spec.b} and a={spec.a}",
                              "lp.eta")
    gap_override = lp.get("gap_override", False)
    if not isinstance(gap_override, bool):
        raise ConfigError("must be true or false", "lp.gap_override")
    try:
        lp_params = LPParams(eta, _number(g, "t_trunc", 40.0, "grid"),
                             _number(lp, "tol", 1e-6, "lp"),
                             _number(lp, "max_iter", 200, "lp", int), gap_override)
    except LevyFoliationError as exc:
        raise ConfigError(str(exc), "lp") from exc
    if -lp_params.t_trunc < grid.t_min - 1e-9:
        raise ConfigError(f"t_trunc={lp_params.t_trunc} exceeds the realization window "
                          f"below 0 ({-grid.t_min})", "grid.t_trunc")

    experiments = doc.get("experiments", []) or []
    if not isinstance(experiments, list):
        raise ConfigError("must be a list of task names", "experiments")
    for i, task in enumerate(experiments):
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}; available: {', '.join(TASKS)}",
                              f"experiments[{i}]")
    if len(set(experiments)) != len(experiments):
        raise ConfigError("tasks must not repeat", "experiments")

    s = _section(doc, "sampling")
    default_grid = np.round(np.linspace(-3, 3, 61), 12).tolist()
    xi = _vectors(s.get("xi", default_grid), spec.n, "sampling.xi")
    zeta = _vectors(s.get("zeta", default_grid), spec.m, "sampling.zeta")
    bps = s.get("base_points", [[1.0] * spec.n + [0.0] * spec.m])
    base_points = _vectors(bps, spec.n + spec.m, "sampling.base_points")
    seeds = s.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(
            isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in seeds):
        raise ConfigError("must be a non-empty list of nonnegative integers", "sampling.seeds")
    tau = _number(s, "tau", 1.0, "sampling")
    horizon = _number(s, "decay_horizon", 40.0, "sampling")
    if not 0 < horizon:
        raise ConfigError("must be positive", "sampling.decay_horizon")
    sub_h = _number(s, "sublinear_horizon", 800.0, "sampling")
    if sub_h < 100:
        raise ConfigError("must be at least 100", "sampling.sublinear_horizon")

    out = _section(doc, "output").get("dir")
    return RunConfig(spec, system_doc, StableParams(alpha, scale), grid, burn_in, lp_params,
                     tuple(experiments), xi, zeta, base_points, tuple(seeds), tau, horizon,
                     sub_h, None if out is None else str(out), doc)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text)


def preset_document(name: str = "example5", epsilon: float = 1.0) -> str:
    """A complete, runnable YAML document for a preset."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    doc = {
        "system": {"preset": name, "epsilon": float(epsilon)},
        "noise": {"alpha": 1.5, "scale": 1.0},
        "grid": {"t_min": -60.0, "t_max": 10.0, "dt": 0.001, "burn_in": 40.0, "t_trunc": 40.0},
        "lp": {"eta": "auto", "tol": 1e-6, "max_iter": 200,
               "gap_override": not gap_condition(1.0, -1.0, abs(epsilon), 0.5)[1]},
        "experiments": ["fiber", "manifold", "parallelism_check", "oracle_compare"],
        "sampling": {"xi": [-3.0, -1.5, 0.0, 1.5, 3.0], "base_points": [[1.0, 0.0], [1.0, 0.5]],
                     "seeds": [0, 1, 2, 3, 4]},
        "output": {"dir": "results"},
    }
    return yaml.safe_dump(doc, sort_keys=False)
