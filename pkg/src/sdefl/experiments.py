"""Scenario driver and artifact emission.

Declarative INI scenarios name a model, its parameters, a sampling grid,
and a method; :func:`run_scenario` maps them onto the simulation,
filtering, and estimation stack and writes deterministic CSV and SVG
artifacts.  Wall-clock numbers never enter CSV files, so repeated runs
with the same seed produce byte-identical trees; timings land in JSON
sidecars instead.
"""

import configparser
import dataclasses
import json
import os
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .core import (
    DegenerateSystemError,
    DomainError,
    Path,
    RandomSource,
    ScenarioError,
    ShapeError,
    rmse,
)
from .kalman import (
    DEFAULT_MEAS_VAR,
    bates_ekf_system,
    ekf_log_likelihood,
    ekf_run,
    estimate_kalman,
    heston_ekf_system,
    kalman_run,
    log_returns,
    ou_state_space,
)
from .mle import Bounds, EstimationReport, bounded_minimize, estimate_mle
from .models import (
    BatesParams,
    BkParams,
    HestonParams,
    JumpParams,
    OuParams,
    simulate_bates,
    simulate_bk,
    simulate_heston,
    simulate_ou,
    simulate_ou_jump,
)
from .particle import particle_ekf_run

SCHEMA_VERSION = 1
SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "scenarios")

MODELS = ("ou", "ou_jump", "bk", "heston", "bates")
METHODS = ("simulate", "mle", "kalman", "ekf", "particle_ekf")

# which method can drive which model
COMPAT = {
    "simulate": MODELS,
    "mle": ("ou", "ou_jump", "bk"),
    "kalman": ("ou", "ou_jump"),
    "ekf": ("heston", "bates"),
    "particle_ekf": ("heston", "bates"),
}

PARAM_FIELDS = {
    "ou": ("theta", "mu", "sigma", "x0"),
    "ou_jump": ("theta", "mu", "sigma", "lambda_j", "mu_j", "sigma_j", "x0"),
    "bk": ("theta", "alpha", "sigma", "r0"),
    "heston": ("mu_s", "kappa", "theta_v", "xi", "rho", "s0", "v0"),
    "bates": ("mu_s", "kappa", "theta_v", "xi", "rho", "lam", "jump_size", "s0", "v0"),
}

_OPTION_KEYS = frozenset(
    {
        "init",
        "bounds_lower",
        "bounds_upper",
        "meas_var",
        "n_particles",
        "jump_convention",
        "objective",
        "v0_guess",
        "p0",
    }
)
_OUTPUT_KEYS = frozenset({"series_csv", "filtered_csv", "estimate_csv", "plot_svg"})
_STAGES = ("simulate", "filter", "estimate")

TABLE5_SCENARIOS = (
    "heston_ekf",
    "heston_ekf_task2",
    "heston_ekf_task3",
    "heston_ekf_task4",
)
BENCHMARK_PAIRS = (("ou_mle", "ou_kalman"), ("ou_jump_mle", "ou_jump_kalman"))


@dataclass(frozen=True)
class Scenario:
    """A fully validated experiment description.

    ``params`` holds the model record fields plus the initial condition;
    ``options`` carries method configuration (init vector, bounds,
    measurement variance, particle count); ``outputs`` maps artifact kinds
    to bare file names.
    """

    name: str
    model: str
    params: dict
    dt: float
    n_steps: int
    seed: int
    method: str
    options: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    input_csv: Optional[str] = None

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ScenarioError("scenario name must be a non-empty string")
        if self.model not in MODELS:
            raise ScenarioError(f"unknown model '{self.model}'")
        if self.method not in METHODS:
            raise ScenarioError(f"unknown method '{self.method}'")
        if self.model not in COMPAT[self.method]:
            raise ScenarioError(
                f"method '{self.method}' does not support model '{self.model}'"
            )
        if not (float(self.dt) > 0.0 and np.isfinite(self.dt)):
            raise ScenarioError(f"dt must be positive and finite, got {self.dt}")
        if int(self.n_steps) < 1:
            raise ScenarioError("n_steps must be >= 1")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "seed", int(self.seed))

        want = set(PARAM_FIELDS[self.model])
        got = set(self.params)
        if got != want:
            missing = ", ".join(sorted(want - got))
            extra = ", ".join(sorted(got - want))
            parts = []
            if missing:
                parts.append(f"missing: {missing}")
            if extra:
                parts.append(f"unknown: {extra}")
            raise ScenarioError(f"bad params for model '{self.model}' ({'; '.join(parts)})")
        clean = {}
        for k in PARAM_FIELDS[self.model]:
            v = float(self.params[k])
            if not np.isfinite(v):
                raise ScenarioError(f"param '{k}' must be finite")
            clean[k] = v
        object.__setattr__(self, "params", clean)

        bad_opts = set(self.options) - _OPTION_KEYS
        if bad_opts:
            raise ScenarioError(f"unknown method options: {', '.join(sorted(bad_opts))}")
        if self.method in ("mle", "kalman") and "init" not in self.options:
            raise ScenarioError(f"method '{self.method}' requires an init vector")
        bad_outs = set(self.outputs) - _OUTPUT_KEYS
        if bad_outs:
            raise ScenarioError(f"unknown output kinds: {', '.join(sorted(bad_outs))}")
        for kind, fname in self.outputs.items():
            if not fname or os.path.basename(fname) != fname:
                raise ScenarioError(f"output '{kind}' must be a bare file name, got '{fname}'")
        object.__setattr__(self, "options", dict(self.options))
        object.__setattr__(self, "outputs", dict(self.outputs))

    def default_stages(self):
        if self.method == "simulate":
            return ("simulate",)
        if self.method == "mle":
            return ("simulate", "estimate")
        if self.method == "kalman":
            return ("simulate", "filter", "estimate")
        if self.method == "ekf" and "init" in self.options:
            return ("simulate", "filter", "estimate")
        return ("simulate", "filter")


@dataclass(frozen=True)
class RunReport:
    """What a scenario run produced: tracking error, fit, artifacts, timings."""

    scenario: str
    seed: int
    rmse: Optional[float] = None
    log_lik: Optional[float] = None
    estimation: Optional[EstimationReport] = None
    timings: dict = field(default_factory=dict)
    artifacts: tuple = ()


def list_scenarios():
    """Names of the packaged scenario files, sorted."""
    names = [f[:-4] for f in os.listdir(SCENARIO_DIR) if f.endswith(".scn")]
    return tuple(sorted(names))


def _cfg_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"[{section}] {key} must be a number, got '{raw}'") from None


def _cfg_int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ScenarioError(f"[{section}] {key} must be an integer, got '{raw}'") from None


def _cfg_floats(section, key, raw):
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise ScenarioError(
            f"[{section}] {key} must be comma-separated numbers, got '{raw}'"
        ) from None


def load_scenario(name_or_path) -> Scenario:
    """Load a scenario by packaged name or by explicit .scn file path."""
    path = str(name_or_path)
    if not os.path.isfile(path):
        candidate = os.path.join(SCENARIO_DIR, path + ".scn")
        if not os.path.isfile(candidate):
            known = ", ".join(list_scenarios())
            raise ScenarioError(f"no scenario named '{name_or_path}' (known: {known})")
        path = candidate

    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh, source=path)

    sections = set(cp.sections())
    required = {"scenario", "params", "method"}
    if not required <= sections:
        raise ScenarioError(f"scenario file needs sections {sorted(required)}")
    unknown = sections - required - {"outputs"}
    if unknown:
        raise ScenarioError(f"unknown sections: {', '.join(sorted(unknown))}")

    head = dict(cp.items("scenario"))
    for key in ("schema_version", "name", "model", "dt", "n_steps", "seed"):
        if key not in head:
            raise ScenarioError(f"[scenario] is missing '{key}'")
    extra = set(head) - {"schema_version", "name", "model", "dt", "n_steps", "seed", "input_csv"}
    if extra:
        raise ScenarioError(f"unknown [scenario] keys: {', '.join(sorted(extra))}")
    input_csv = head.get("input_csv")
    if input_csv is not None and not os.path.isabs(input_csv):
        # relative data files travel with the scenario file
        input_csv = os.path.join(os.path.dirname(os.path.abspath(path)), input_csv)
    version = _cfg_int("scenario", "schema_version", head["schema_version"])
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")

    params = {k: _cfg_float("params", k, v) for k, v in cp.items("params")}

    method = dict(cp.items("method"))
    if "kind" not in method:
        raise ScenarioError("[method] is missing 'kind'")
    kind = method.pop("kind")
    options = {}
    for key, raw in method.items():
        if key in ("init", "bounds_lower", "bounds_upper"):
            options[key] = _cfg_floats("method", key, raw)
        elif key in ("meas_var", "v0_guess", "p0"):
            options[key] = _cfg_float("method", key, raw)
        elif key == "n_particles":
            options[key] = _cfg_int("method", key, raw)
        elif key in ("jump_convention", "objective"):
            options[key] = raw.strip()
        else:
            options[key] = raw  # Scenario validation rejects unknown keys

    outputs = dict(cp.items("outputs")) if cp.has_section("outputs") else {}

    return Scenario(
        name=head["name"],
        model=head["model"],
        params=params,
        dt=_cfg_float("scenario", "dt", head["dt"]),
        n_steps=_cfg_int("scenario", "n_steps", head["n_steps"]),
        seed=_cfg_int("scenario", "seed", head["seed"]),
        method=kind,
        options=options,
        outputs=outputs,
        input_csv=input_csv,
    )


def _model_objects(sc: Scenario):
    """Parameter records plus the simulation initial condition."""
    p = sc.params
    if sc.model == "ou":
        return OuParams(theta=p["theta"], mu=p["mu"], sigma=p["sigma"]), None
    if sc.model == "ou_jump":
        return (
            OuParams(theta=p["theta"], mu=p["mu"], sigma=p["sigma"]),
            JumpParams(lambda_j=p["lambda_j"], mu_j=p["mu_j"], sigma_j=p["sigma_j"]),
        )
    if sc.model == "bk":
        return BkParams(theta=p["theta"], alpha=p["alpha"], sigma=p["sigma"]), None
    heston = HestonParams(
        mu_s=p["mu_s"], kappa=p["kappa"], theta_v=p["theta_v"], xi=p["xi"], rho=p["rho"]
    )
    if sc.model == "heston":
        return heston, None
    return BatesParams(heston=heston, lam=p["lam"], jump_size=p["jump_size"]), None


def _simulate(sc: Scenario, seed: int):
    src = RandomSource(seed)
    p = sc.params
    obj, jump = _model_objects(sc)
    if sc.model == "ou":
        return simulate_ou(obj, p["x0"], sc.dt, sc.n_steps, src)
    if sc.model == "ou_jump":
        return simulate_ou_jump(obj, jump, p["x0"], sc.dt, sc.n_steps, src)
    if sc.model == "bk":
        return simulate_bk(obj, p["r0"], sc.dt, sc.n_steps, src)
    if sc.model == "heston":
        return simulate_heston(obj, p["s0"], p["v0"], sc.dt, sc.n_steps, src)
    return simulate_bates(obj, p["s0"], p["v0"], sc.dt, sc.n_steps, src)


def _load_series(sc: Scenario):
    """Read the measurement series from CSV instead of simulating one.

    The time column must sit on a uniform grid matching the scenario dt;
    scalar models take one value column, the stochastic-volatility models
    take log-price and variance columns.
    """
    try:
        with open(sc.input_csv, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError:
        raise ScenarioError(f"cannot read input_csv '{sc.input_csv}'") from None
    except ValueError as exc:
        raise ScenarioError(f"bad input_csv '{sc.input_csv}': {exc}") from None
    if len(header) < 2 or header[0] != "t" or data.shape[1] != len(header):
        raise ScenarioError("input_csv needs a 't' column plus value columns")
    if data.shape[0] < 2:
        raise ScenarioError("input_csv needs at least 2 rows")
    t = data[:, 0]
    if not np.allclose(np.diff(t), sc.dt, rtol=0.0, atol=1e-9 * max(1.0, abs(sc.dt))):
        raise ScenarioError("input_csv time grid does not match the scenario dt")
    want = 2 if sc.model in ("heston", "bates") else 1
    if data.shape[1] - 1 != want:
        raise ScenarioError(
            f"model '{sc.model}' needs {want} value column(s), got {data.shape[1] - 1}"
        )
    t0 = float(t[0])
    if want == 1:
        return Path(t0=t0, dt=sc.dt, values=data[:, 1])
    return (
        Path(t0=t0, dt=sc.dt, values=data[:, 1]),
        Path(t0=t0, dt=sc.dt, values=data[:, 2]),
    )


def _get_series(sc: Scenario, seed: int):
    if sc.input_csv is not None:
        return _load_series(sc)
    return _simulate(sc, seed)


def _run_filter(sc: Scenario, sim, seed: int):
    """Track the latent state; returns (joint truth/estimate Path, rmse, ll)."""
    opts = sc.options
    p0 = float(opts.get("p0", 1.0))
    if sc.method == "kalman":
        obj, jump = _model_objects(sc)
        sys = ou_state_space(
            obj,
            sc.dt,
            meas_var=float(opts.get("meas_var", DEFAULT_MEAS_VAR)),
            jump=jump,
            x_init=float(sim.values[0]),
            p0=p0,
        )
        states, ll = kalman_run(sim.values[1:], sys)
        est = np.array([st.mean[1] for st in states])
        truth = sim.values[1:]
        t0 = sim.t0 + sim.dt
    else:
        lns, variance = sim
        obj, _ = _model_objects(sc)
        v0_guess = float(opts.get("v0_guess", 1.0))
        if sc.method == "ekf":
            if sc.model == "heston":
                sys = heston_ekf_system(obj, sc.dt, lns)
            else:
                sys = bates_ekf_system(obj, sc.dt, lns)
            states, ll = ekf_run(log_returns(lns), sys, x0=v0_guess, p0=p0)
            est = np.array([st.mean[0] for st in states])
        else:
            n_particles = int(opts.get("n_particles", 1000))
            est_path, ll = particle_ekf_run(
                lns, obj, n_particles, RandomSource(seed), x0_guess=v0_guess, p0=p0
            )
            est = est_path.values[1:]
        truth = variance.values[1:]
        t0 = lns.t0 + lns.dt

    joint = Path(t0=t0, dt=sc.dt, values=np.column_stack([truth, est]))
    return joint, float(rmse(est, truth)), float(ll)


def _estimate_bounds(opts, n_params):
    lower = np.asarray(opts.get("bounds_lower", (1e-15,)), dtype=float)
    upper = np.asarray(opts.get("bounds_upper", (6.0,)), dtype=float)
    if lower.size == 1:
        lower = np.full(n_params, lower[0])
    if upper.size == 1:
        upper = np.full(n_params, upper[0])
    if lower.shape != (n_params,) or upper.shape != (n_params,):
        raise ScenarioError(f"bounds must be scalar or {n_params} entries")
    return Bounds(lower, upper)


def _run_estimate(sc: Scenario, sim) -> EstimationReport:
    opts = sc.options
    if sc.method == "mle":
        init = opts["init"]
        return estimate_mle(
            sim,
            sc.model,
            init,
            _estimate_bounds(opts, len(init)),
            convention=opts.get("jump_convention", "cdf_dt"),
        )
    if sc.method == "kalman":
        init = opts["init"]
        return estimate_kalman(
            sim,
            sc.model,
            init,
            _estimate_bounds(opts, len(init)),
            meas_var=float(opts.get("meas_var", DEFAULT_MEAS_VAR)),
        )
    if sc.method == "ekf":
        if "init" not in opts:
            raise ScenarioError(f"scenario '{sc.name}' has no estimation init")
        return _estimate_ekf(sc, sim)
    raise ScenarioError(f"method '{sc.method}' has no estimation stage")


def _estimate_ekf(sc: Scenario, sim) -> EstimationReport:
    """Fit the five stochastic-volatility parameters by EKF objective."""
    lns, _ = sim
    dl = log_returns(lns)
    opts = sc.options
    v0_guess = float(opts.get("v0_guess", 1.0))
    p0 = float(opts.get("p0", 1.0))
    objective_kind = opts.get("objective", "quadratic")
    init = np.asarray(opts["init"], dtype=float)
    if init.shape != (5,):
        raise ScenarioError("ekf estimation init needs 5 entries")
    lower = np.asarray(opts.get("bounds_lower", (1e-15, 1e-15, 1e-15, 1e-15, -0.999)), dtype=float)
    upper = np.asarray(opts.get("bounds_upper", (6.0, 6.0, 6.0, 6.0, 0.999)), dtype=float)
    bounds = Bounds(lower, upper)

    def pack(v):
        return HestonParams(
            mu_s=float(v[0]), kappa=float(v[1]), theta_v=float(v[2]),
            xi=float(v[3]), rho=float(v[4]),
        )

    def objective(v):
        try:
            sys = heston_ekf_system(pack(v), sc.dt, lns)
            return ekf_log_likelihood(dl, sys, x0=v0_guess, p0=p0, objective=objective_kind)
        except (DomainError, DegenerateSystemError):
            return np.inf

    return bounded_minimize(objective, init, bounds, pack)


def run_scenario(sc: Scenario, out_dir=None, seed=None, stages=None) -> RunReport:
    """Execute a scenario and write the artifacts it names.

    seed overrides the scenario's own seed; stages restricts the pipeline
    (any subset of simulate/filter/estimate, later stages pull in the
    simulation they need).
    """
    use_seed = sc.seed if seed is None else int(seed)
    out = out_dir if out_dir is not None else os.getcwd()
    if stages is None:
        stages = sc.default_stages()
    stages = tuple(stages)
    for st in stages:
        if st not in _STAGES:
            raise ScenarioError(f"unknown stage '{st}'")
    allowed = sc.default_stages()
    for st in stages:
        if st not in allowed:
            raise ScenarioError(f"scenario '{sc.name}' has no {st} stage")

    timings = {}
    artifacts = []
    started = time.perf_counter()
    sim = _get_series(sc, use_seed)
    timings["simulate"] = time.perf_counter() - started

    if "simulate" in stages and "series_csv" in sc.outputs:
        target = os.path.join(out, sc.outputs["series_csv"])
        if sc.model in ("heston", "bates"):
            lns, variance = sim
            joint = Path(t0=lns.t0, dt=lns.dt,
                         values=np.column_stack([lns.values, variance.values]))
            emit_csv(joint, target, labels=("log_price", "variance"))
        else:
            emit_csv(sim, target)
        artifacts.append(target)
    if sc.method == "simulate" and "plot_svg" in sc.outputs:
        target = os.path.join(out, sc.outputs["plot_svg"])
        if sc.model in ("heston", "bates"):
            lns, variance = sim
            emit_plot([("log_price", lns), ("variance", variance)], target)
        else:
            emit_plot([(sc.model, sim)], target)
        artifacts.append(target)

    tracking_rmse = None
    log_lik = None
    if "filter" in stages:
        t1 = time.perf_counter()
        joint, tracking_rmse, log_lik = _run_filter(sc, sim, use_seed)
        timings["filter"] = time.perf_counter() - t1
        if "filtered_csv" in sc.outputs:
            target = os.path.join(out, sc.outputs["filtered_csv"])
            emit_csv(joint, target, labels=("truth", "estimate"))
            artifacts.append(target)
        if "plot_svg" in sc.outputs:
            target = os.path.join(out, sc.outputs["plot_svg"])
            truth = Path(joint.t0, joint.dt, joint.values[:, 0])
            est = Path(joint.t0, joint.dt, joint.values[:, 1])
            emit_plot([("truth", truth), ("estimate", est)], target)
            artifacts.append(target)

    report = None
    if "estimate" in stages:
        t2 = time.perf_counter()
        report = _run_estimate(sc, sim)
        timings["estimate"] = time.perf_counter() - t2
        if "estimate_csv" in sc.outputs:
            target = os.path.join(out, sc.outputs["estimate_csv"])
            emit_csv(report, target)
            artifacts.append(target)

    return RunReport(
        scenario=sc.name,
        seed=use_seed,
        rmse=tracking_rmse,
        log_lik=log_lik,
        estimation=report,
        timings=timings,
        artifacts=tuple(artifacts),
    )


def _fmt(x):
    """Shortest decimal text that round-trips back to the same float."""
    return repr(float(x))


def _flatten_params(obj, into, prefix=""):
    if isinstance(obj, tuple):
        for part in obj:
            _flatten_params(part, into, prefix)
        return
    for k, v in dataclasses.asdict(obj).items():
        if isinstance(v, dict):
            for kk, vv in v.items():
                into[f"{prefix}{kk}"] = vv
        else:
            into[f"{prefix}{k}"] = v


def emit_csv(obj, file_path, labels=None):
    """Write a Path or EstimationReport as CSV (atomic, LF, UTF-8).

    Wall-clock fields are deliberately dropped so output bytes depend only
    on the data.
    """
    lines = []
    if isinstance(obj, Path):
        t = obj.times()
        if obj.values.ndim == 1:
            header = ("t", labels[0] if labels else "value")
            lines.append(",".join(header))
            for tk, vk in zip(t, obj.values):
                lines.append(f"{_fmt(tk)},{_fmt(vk)}")
        else:
            d = obj.values.shape[1]
            names = tuple(labels) if labels else tuple(f"value_{k}" for k in range(d))
            if len(names) != d:
                raise ShapeError(f"need {d} column labels, got {len(names)}")
            lines.append(",".join(("t",) + names))
            for k in range(obj.values.shape[0]):
                row = ",".join(_fmt(v) for v in obj.values[k])
                lines.append(f"{_fmt(t[k])},{row}")
    elif isinstance(obj, EstimationReport):
        lines.append("field,value")
        flat = {}
        _flatten_params(obj.params, flat)
        for k, v in flat.items():
            lines.append(f"{k},{_fmt(v)}")
        lines.append(f"neg_log_lik,{_fmt(obj.neg_log_lik)}")
        lines.append(f"iterations,{int(obj.iterations)}")
        lines.append(f"converged,{str(bool(obj.converged)).lower()}")
    else:
        raise ShapeError(f"cannot emit {type(obj).__name__} as CSV")
    _atomic_write(file_path, "\n".join(lines) + "\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
_SVG_W, _SVG_H = 800, 500
_MARGIN = {"left": 60.0, "right": 20.0, "top": 20.0, "bottom": 40.0}


def _ticks(lo, hi, count=5):
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def emit_plot(labeled_paths, file_path):
    """Render scalar paths as a deterministic standalone SVG line chart."""
    series = list(labeled_paths)
    if not series:
        raise ShapeError("need at least one path to plot")
    for _, p in series:
        if not isinstance(p, Path) or p.values.ndim != 1:
            raise ShapeError("emit_plot takes (label, scalar Path) pairs")

    xs = [p.times() for _, p in series]
    x_lo = min(float(t[0]) for t in xs)
    x_hi = max(float(t[-1]) for t in xs)
    y_lo = min(float(np.min(p.values)) for _, p in series)
    y_hi = max(float(np.max(p.values)) for _, p in series)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    plot_w = _SVG_W - _MARGIN["left"] - _MARGIN["right"]
    plot_h = _SVG_H - _MARGIN["top"] - _MARGIN["bottom"]

    def sx(t):
        return _MARGIN["left"] + (t - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return _MARGIN["top"] + (1.0 - (v - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="#ffffff"/>',
        f'<g stroke="#333333" stroke-width="1">'
        f'<line x1="{_MARGIN["left"]}" y1="{_MARGIN["top"] + plot_h:.2f}" '
        f'x2="{_MARGIN["left"] + plot_w:.2f}" y2="{_MARGIN["top"] + plot_h:.2f}"/>'
        f'<line x1="{_MARGIN["left"]}" y1="{_MARGIN["top"]}" '
        f'x2="{_MARGIN["left"]}" y2="{_MARGIN["top"] + plot_h:.2f}"/></g>',
    ]
    for tv in _ticks(x_lo, x_hi):
        x = sx(tv)
        y = _MARGIN["top"] + plot_h
        parts.append(
            f'<line x1="{x:.2f}" y1="{y:.2f}" x2="{x:.2f}" y2="{y + 5:.2f}" '
            f'stroke="#333333" stroke-width="1"/>'
            f'<text x="{x:.2f}" y="{y + 18:.2f}" font-family="sans-serif" font-size="12" '
            f'text-anchor="middle" fill="#333333">{tv:.6g}</text>'
        )
    for tv in _ticks(y_lo, y_hi):
        y = sy(tv)
        x = _MARGIN["left"]
        parts.append(
            f'<line x1="{x - 5:.2f}" y1="{y:.2f}" x2="{x:.2f}" y2="{y:.2f}" '
            f'stroke="#333333" stroke-width="1"/>'
            f'<text x="{x - 8:.2f}" y="{y + 4:.2f}" font-family="sans-serif" font-size="12" '
            f'text-anchor="end" fill="#333333">{tv:.6g}</text>'
        )
    for idx, (label, p) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(p.times(), p.values))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _MARGIN["top"] + 16 + 18 * idx
        lx = _MARGIN["left"] + plot_w - 150
        parts.append(
            f'<line x1="{lx:.2f}" y1="{ly - 4:.2f}" x2="{lx + 24:.2f}" y2="{ly - 4:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<text x="{lx + 30:.2f}" y="{ly:.2f}" font-family="sans-serif" font-size="12" '
            f'fill="#333333">{escape(str(label))}</text>'
        )
    parts.append("</svg>")
    _atomic_write(file_path, "\n".join(parts) + "\n")


def _atomic_write(file_path, text):
    target = os.path.abspath(file_path)
    parent = os.path.dirname(target)
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=".sdefl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def benchmark(sc_a: Scenario, sc_b: Scenario, out_dir=None, seed=None, repetitions=5):
    """Time two estimation scenarios on one shared series.

    Both scenarios must fit the same model; the series is simulated from
    sc_a's configuration.  After one untimed warmup per method the median
    of ``repetitions`` runs is reported; the comparison lands in a JSON
    file, never in a CSV.
    """
    if repetitions < 1:
        raise ScenarioError("repetitions must be >= 1")
    if sc_a.model != sc_b.model:
        raise ScenarioError(
            f"benchmark needs one model, got '{sc_a.model}' and '{sc_b.model}'"
        )
    for sc in (sc_a, sc_b):
        if "estimate" not in sc.default_stages():
            raise ScenarioError(f"scenario '{sc.name}' has no estimation stage")
    use_seed = sc_a.seed if seed is None else int(seed)
    out = out_dir if out_dir is not None else os.getcwd()

    sim = _get_series(sc_a, use_seed)
    medians = {}
    fits = {}
    for sc in (sc_a, sc_b):
        _run_estimate(sc, sim)  # warmup: jit and cache effects land here
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            fits[sc.name] = _run_estimate(sc, sim)
            times.append(time.perf_counter() - t0)
        medians[sc.name] = statistics.median(times)

    record = {
        "model": sc_a.model,
        "scenario_a": sc_a.name,
        "scenario_b": sc_b.name,
        "seed": use_seed,
        "repetitions": repetitions,
        "median_s_a": round(medians[sc_a.name], 4),
        "median_s_b": round(medians[sc_b.name], 4),
        "ratio_a_over_b": round(medians[sc_a.name] / max(medians[sc_b.name], 1e-12), 4),
        "neg_log_lik_a": fits[sc_a.name].neg_log_lik,
        "neg_log_lik_b": fits[sc_b.name].neg_log_lik,
    }
    target = os.path.join(out, f"benchmark_{sc_a.name}_vs_{sc_b.name}.json")
    _atomic_write(target, json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def _write_table5_csv(reports, out_dir):
    lines = ["scenario,rmse"]
    for rep in reports:
        lines.append(f"{rep.scenario},{_fmt(rep.rmse)}")
    target = os.path.join(out_dir, "table5_rmse.csv")
    _atomic_write(target, "\n".join(lines) + "\n")
    return target


def run_table5_sweep(out_dir=None, seed=None):
    """Variance-tracking RMSE for the four stochastic-volatility regimes."""
    out = out_dir if out_dir is not None else os.getcwd()
    reports = [
        run_scenario(load_scenario(name), out_dir=out, seed=seed)
        for name in TABLE5_SCENARIOS
    ]
    _write_table5_csv(reports, out)
    return reports


def reproduce(out_dir=None, seed=None):
    """Run every packaged scenario plus the sweeps and benchmarks.

    CSV artifacts are byte-stable for a fixed seed; wall-clock numbers go
    to timings.json and the benchmark JSON files only.
    """
    out = out_dir if out_dir is not None else os.getcwd()
    reports = []
    by_name = {}
    for name in list_scenarios():
        rep = run_scenario(load_scenario(name), out_dir=out, seed=seed)
        reports.append(rep)
        by_name[name] = rep
    _write_table5_csv([by_name[n] for n in TABLE5_SCENARIOS], out)
    for name_a, name_b in BENCHMARK_PAIRS:
        benchmark(load_scenario(name_a), load_scenario(name_b), out_dir=out, seed=seed)
    timings = {
        rep.scenario: {k: round(v, 4) for k, v in rep.timings.items()} for rep in reports
    }
    _atomic_write(os.path.join(out, "timings.json"), json.dumps(timings, indent=2, sort_keys=True) + "\n")
    return reports
