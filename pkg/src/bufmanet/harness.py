"""Sweeps that pair the analytical pipeline with the simulator.

A sweep varies one parameter of a base scenario, evaluates the closed forms at
every point and, when asked, simulates the same point. Results are flattened
into long-format CSV rows ``sweep_var,value,metric,analytic,simulated,
sim_stderr,rel_err``.
"""

from __future__ import annotations

import configparser
import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .delay import e2e_delay
from .errors import BufManetError, InvalidParameter
from .mac import MacScenario, MacVariant
from .relay import saturation_rop, throughput_capacity
from .sim import Mobility, SimConfig, run_simulation

log = logging.getLogger(__name__)

CSV_HEADER = ["sweep_var", "value", "metric", "analytic", "simulated",
              "sim_stderr", "rel_err"]
SATURATED = "saturated"

ALL_METRICS = ("rop", "throughput", "q_delay", "d_delay", "e2e_delay",
               "mu", "mu_s", "rho_s", "psi")
SIM_METRICS = {"rop": "rop", "throughput": "throughput", "q_delay": "mean_q_delay",
               "d_delay": "mean_d_delay", "e2e_delay": "mean_e2e_delay"}
DELAY_METRICS = ("q_delay", "d_delay", "e2e_delay", "mu_s", "rho_s", "psi")


class SweepVariable(str, enum.Enum):
    WORKLOAD = "workload"
    LAMBDA = "lambda"
    BUFFER = "buffer"
    NODES = "nodes"


@dataclass(frozen=True)
class SweepSpec:
    base: SimConfig
    sweep_variable: SweepVariable
    points: tuple
    outputs: tuple = ALL_METRICS
    compare: bool = False
    label: str = ""
    # node-count sweeps keep n / m**2 fixed at this value when set
    nodes_per_cell: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "sweep_variable", SweepVariable(self.sweep_variable))
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.points:
            raise InvalidParameter("a sweep needs at least one point")
        if any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise InvalidParameter("sweep points must be strictly increasing")
        unknown = set(self.outputs) - set(ALL_METRICS)
        if unknown:
            raise InvalidParameter(f"unknown output metrics: {sorted(unknown)}")


@dataclass
class ComparisonRow:
    sweep_var: str
    value: float
    analytic: dict = field(default_factory=dict)
    simulated: dict = field(default_factory=dict)
    sim_stderr: dict = field(default_factory=dict)
    saturated: bool = False
    error: str | None = None

    def rel_err(self, metric: str) -> float | None:
        a, s = self.analytic.get(metric), self.simulated.get(metric)
        if not isinstance(a, float) or s is None or a == 0.0:
            return None
        return abs(s - a) / abs(a)


def point_config(spec: SweepSpec, value) -> SimConfig:
    """The base configuration moved to one sweep point."""
    base = spec.base
    sc = base.scenario
    var = spec.sweep_variable
    if var is SweepVariable.WORKLOAD:
        mu = throughput_capacity(sc.probabilities(), sc.n, base.B)
        return replace(base, lam=float(value) * mu)
    if var is SweepVariable.LAMBDA:
        return replace(base, lam=float(value))
    if var is SweepVariable.BUFFER:
        return replace(base, B=int(value))
    n = int(value)
    m = sc.m
    if spec.nodes_per_cell:
        m = max(1, round(math.sqrt(n / spec.nodes_per_cell)))
    return replace(base, scenario=replace(sc, n=n, m=m))


def analyze_point(config: SimConfig) -> tuple[dict, bool]:
    """Closed-form metrics at one configuration and whether it is saturated."""
    sc = config.scenario
    probs = sc.probabilities()
    mu = throughput_capacity(probs, sc.n, config.B)
    if config.lam >= mu * (1.0 - 1e-9):
        out = {k: SATURATED for k in DELAY_METRICS}
        out.update(mu=mu, rop=saturation_rop(sc.n, config.B), throughput=mu)
        return out, True
    rep = e2e_delay(sc.n, config.B, config.lam, probs)
    return {"rop": rep.p_o, "throughput": config.lam, "q_delay": rep.q_delay,
            "d_delay": rep.d_delay, "e2e_delay": rep.e2e_delay, "mu": rep.mu,
            "mu_s": rep.mu_s, "rho_s": rep.rho_s, "psi": rep.psi}, False


def run_point(spec: SweepSpec, value) -> ComparisonRow:
    row = ComparisonRow(spec.sweep_variable.value, value)
    try:
        config = point_config(spec, value)
        analytic, row.saturated = analyze_point(config)
        row.analytic = {k: analytic[k] for k in spec.outputs}
        if spec.compare:
            metrics = run_simulation(config)
            for k in spec.outputs:
                if k not in SIM_METRICS:
                    continue
                if row.saturated and k != "throughput" and k != "rop":
                    # source queues grow without bound; delays are not stationary
                    continue
                est = getattr(metrics, SIM_METRICS[k])
                row.simulated[k] = est.mean
                row.sim_stderr[k] = est.stderr
    except BufManetError as exc:
        log.warning("sweep point %s=%s failed: %s", spec.sweep_variable.value, value, exc)
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(spec: SweepSpec, out: str | Path | None = None) -> list[ComparisonRow]:
    rows = []
    for value in spec.points:
        log.info("%s %s=%s", spec.label or "sweep", spec.sweep_variable.value, value)
        rows.append(run_point(spec, value))
    if out is not None:
        write_rows(rows, out)
    return rows


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return f"{x:.10g}"


def row_records(row: ComparisonRow, outputs) -> list[list[str]]:
    if row.error is not None:
        return [[row.sweep_var, _fmt(row.value), "error", row.error, "", "", ""]]
    return [[row.sweep_var, _fmt(row.value), k, _fmt(row.analytic.get(k)),
             _fmt(row.simulated.get(k)), _fmt(row.sim_stderr.get(k)),
             _fmt(row.rel_err(k))] for k in outputs]


def write_rows(rows: list[ComparisonRow], target, append: bool = False,
               outputs=None) -> None:
    """Write rows to a path or an open text stream; ``append`` skips the header."""
    if hasattr(target, "write"):
        _write(rows, target, not append, outputs)
        return
    path = Path(target)
    header = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        _write(rows, fh, header, outputs)


def _write(rows, fh, header, outputs):
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    for row in rows:
        keys = outputs or list(row.analytic) or list(ALL_METRICS)
        w.writerows(row_records(row, keys))


# -- presets ------------------------------------------------------------------

WORKLOADS = tuple(round(0.1 * k, 1) for k in range(1, 10))
DESK_SLOTS = 2_000_000
DESK_REPLICATIONS = 4


def _base(variant, n, m, B, *, lam=0.0, nu=1, delta=1.0, mobility=Mobility.IID,
          slots=DESK_SLOTS, replications=DESK_REPLICATIONS):
    return SimConfig(MacScenario(variant, n, m, nu, delta), B, lam, mobility,
                     slots=slots, replications=replications)


def _validation(outputs, tag):
    specs = []
    for variant in (MacVariant.LS, MacVariant.EC):
        for case, (n, m) in (("case1", (32, 4)), ("case2", (50, 5))):
            for mob in Mobility:
                specs.append(SweepSpec(
                    _base(variant, n, m, 5, mobility=mob), SweepVariable.WORKLOAD,
                    WORKLOADS, outputs, compare=True,
                    label=f"{tag}-{variant.value}-{case}-{mob.value}"))
    return specs


def _preset_fig8():
    loads = WORKLOADS + (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)
    return [
        SweepSpec(_base(MacVariant.LS, 200, 10, 5), SweepVariable.WORKLOAD, loads,
                  ("throughput", "mu"), compare=True, label="fig8-ls"),
        SweepSpec(_base(MacVariant.EC, 32, 4, 10), SweepVariable.WORKLOAD, loads,
                  ("throughput", "mu"), compare=True, label="fig8-ec"),
    ]


def _preset_fig9():
    loads = tuple(round(0.05 * k, 2) for k in range(1, 20))
    return [SweepSpec(_base(MacVariant.LS, 32, 4, B), SweepVariable.WORKLOAD, loads,
                      ("d_delay", "rop"), label=f"fig9-B{B}") for B in (5, 20, 500)]


def _preset_fig10():
    lams = tuple(round(0.001 * k, 3) for k in range(1, 60))
    return [SweepSpec(_base(MacVariant.LS, 32, 4, B), SweepVariable.LAMBDA, lams,
                      ("e2e_delay", "q_delay", "d_delay"), label=f"fig10-B{B}")
            for B in (5, 20, 500)]


def _preset_fig11():
    buffers = tuple(range(1, 51))
    return [SweepSpec(_base(MacVariant.LS, 32, 4, 1, lam=lam), SweepVariable.BUFFER,
                      buffers, ("e2e_delay", "mu"), label=f"fig11-lambda{lam}")
            for lam in (0.01, 0.02)]


_NODES_3D = tuple(2 * m * m for m in range(2, 11))


def _preset_fig12():
    lams = tuple(round(0.01 * k, 2) for k in range(1, 25))
    return [SweepSpec(_base(MacVariant.LS, 8, 2, 5, lam=lam),
                      SweepVariable.NODES, _NODES_3D, ("e2e_delay", "mu"),
                      label=f"fig12-lambda{lam}", nodes_per_cell=2.0) for lam in lams]


def _preset_fig13():
    return [SweepSpec(_base(MacVariant.LS, 8, 2, B, lam=0.02), SweepVariable.NODES,
                      _NODES_3D, ("e2e_delay", "mu"), label=f"fig13-B{B}",
                      nodes_per_cell=2.0) for B in range(1, 21)]


_PRESETS = {
    "fig6-rop": lambda: _validation(("rop",), "fig6"),
    "fig7-e2e": lambda: _validation(("e2e_delay", "q_delay", "d_delay"), "fig7"),
    "fig8-throughput": _preset_fig8,
    "fig9-delivery": _preset_fig9,
    "fig10-e2e-lambda": _preset_fig10,
    "fig11-e2e-buffer": _preset_fig11,
    "fig12-3d": _preset_fig12,
    "fig13-3d": _preset_fig13,
    "fig12/13-3d": lambda: _preset_fig12() + _preset_fig13(),
}


def scenario_presets() -> dict[str, list[SweepSpec]]:
    """Named sweep catalogue; each entry is built fresh on every call."""
    return {name: build() for name, build in _PRESETS.items()}


def preset_names() -> list[str]:
    return list(_PRESETS)


def get_preset(name: str) -> list[SweepSpec]:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise InvalidParameter(
            f"unknown preset {name!r}; choose from {', '.join(_PRESETS)}") from None


# -- config files ---------------------------------------------------------------

_SCENARIO_KEYS = {"variant", "n", "m", "nu", "delta"}
_SIM_KEYS = {"B", "lam", "mobility", "slots", "warmup_fraction", "seed",
             "replications", "batches"}
_SWEEP_KEYS = {"sweep_variable", "points", "outputs", "compare", "label",
               "nodes_per_cell"}


def read_config(path: str | Path) -> dict:
    """Flat ``key = value`` settings from an INI file (any section names)."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[config]\n" + text
    parser.read_string(text)
    values = {}
    for section in parser.sections():
        values.update(parser[section])
    unknown = set(values) - _SCENARIO_KEYS - _SIM_KEYS - _SWEEP_KEYS
    if unknown:
        raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
    return values


def _number(text):
    text = str(text).strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def _points(text):
    if isinstance(text, (list, tuple)):
        return tuple(text)
    text = str(text).strip()
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        k = int(round((hi - lo) / step))
        return tuple(round(lo + i * step, 12) for i in range(k + 1))
    return tuple(_number(x) for x in text.replace(",", " ").split())


def build_config(values: dict) -> SimConfig:
    """SimConfig from string or typed values keyed by field name."""
    try:
        sc = MacScenario(values.get("variant", "ls"), int(values.get("n", 32)),
                         int(values.get("m", 4)), int(values.get("nu", 1)),
                         float(values.get("delta", 1.0)))
        kw = {}
        for key, conv in (("slots", int), ("warmup_fraction", float), ("seed", int),
                          ("replications", int), ("batches", int)):
            if key in values:
                kw[key] = conv(values[key])
        return SimConfig(sc, int(values.get("B", 5)), float(values.get("lam", 0.0)),
                         values.get("mobility", "iid"), **kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, BufManetError):
            raise
        raise InvalidParameter(str(exc)) from exc


def build_sweep(values: dict) -> SweepSpec:
    base = build_config(values)
    if "sweep_variable" not in values or "points" not in values:
        raise InvalidParameter("a sweep needs sweep_variable and points")
    outputs = values.get("outputs")
    if isinstance(outputs, str):
        outputs = tuple(outputs.replace(",", " ").split())
    compare = values.get("compare", False)
    if isinstance(compare, str):
        compare = compare.strip().lower() in {"1", "true", "yes", "on"}
    npc = values.get("nodes_per_cell")
    try:
        return SweepSpec(base, values["sweep_variable"], _points(values["points"]),
                         outputs or ALL_METRICS, bool(compare),
                         label=values.get("label", ""),
                         nodes_per_cell=float(npc) if npc else None)
    except ValueError as exc:
        if isinstance(exc, BufManetError):
            raise
        raise InvalidParameter(str(exc)) from exc
