"""Run configuration: one YAML file, optionally patched by ``--set key=value``.

Validation errors carry the file and line of the offending key.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .builders import METRICS, RHS
from .flow import FlowConfig
from .solvers import SolverConfig

TASKS = ("solve", "solve-zero", "degenerate", "flow", "verify", "concentrate")
COMMANDS = {"solve": ("solve", "solve-zero", "degenerate"), "flow": ("flow",),
            "verify": ("verify",), "concentrate": ("concentrate",)}
DIAGNOSTICS = ("cln", "cauchy_schwarz", "mass_estimate", "energy", "mixed_type", "trace",
               "constant_bound", "sup_bounds", "comparison", "metric_monotonicity",
               "capacity", "volume_capacity", "curvature", "gauduchon")
TOP_KEYS = {"task", "seed", "grid", "metric", "beta", "rhs", "lam", "solver", "flow",
            "concentration", "verify", "output"}


class ConfigError(ValueError):
    pass


@dataclass
class BuilderSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    task: str
    n: int
    res: int
    metric: BuilderSpec
    rhs: BuilderSpec
    beta: BuilderSpec | None = None
    lam: float = 1.0
    seed: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    flow_agreement_tol: float = 1e-4
    concentration: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output_dir: str = "out"
    raw: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Resolved settings that determine the results (output location excluded)."""
        d = {
            "task": self.task, "grid": {"n": self.n, "res": self.res},
            "metric": dataclasses.asdict(self.metric), "rhs": dataclasses.asdict(self.rhs),
            "beta": dataclasses.asdict(self.beta) if self.beta else None,
            "lam": self.lam, "seed": self.seed,
            "solver": dataclasses.asdict(self.solver), "flow": dataclasses.asdict(self.flow),
            "flow_agreement_tol": self.flow_agreement_tol,
            "concentration": self.concentration, "verify": self.verify,
        }
        return json.loads(json.dumps(d, sort_keys=True))

    def sha256(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ----------------------------------------------------------------- YAML

def _line_map(node, prefix=(), out=None):
    """dotted key path -> 1-based line of the key in the source."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            out[".".join(path)] = k.start_mark.line + 1
            _line_map(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, prefix + (str(i),), out)
    return out


class _Where:
    def __init__(self, source: str, lines: dict):
        self.source = source
        self.lines = lines

    def __call__(self, key: str, msg: str) -> ConfigError:
        parts = key.split(".")
        while parts and ".".join(parts) not in self.lines:
            parts.pop()
        line = self.lines.get(".".join(parts)) if parts else None
        if line is None and self.lines:
            line = 1  # key absent from the file: point at its top level
        loc = f"{self.source}:{line}" if line else f"{self.source}"
        return ConfigError(f"{loc}: {key}: {msg}")


def parse_override(text: str):
    """'a.b=value' -> (['a', 'b'], YAML-parsed value)."""
    if "=" not in text:
        raise ConfigError(f"--set {text!r}: expected key=value")
    key, val = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set {text!r}: empty key")
    try:
        value = yaml.safe_load(val) if val.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"--set {text!r}: {exc}") from None
    return key.split("."), value


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for text in overrides or ():
        keys, value = parse_override(text)
        node = data
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                node[k] = {}
            node = node[k]
        node[keys[-1]] = value
    return data


def load_config(path, overrides=(), command: str | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config ({exc.strerror})") from None
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{p}{line}: invalid YAML ({getattr(exc, 'problem', exc)})") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}:1: top level must be a mapping")
    where = _Where(str(p), _line_map(node) if node is not None else {})
    data = apply_overrides(data, overrides)
    return from_dict(data, where, command)


def _get(d, key, kind, where, path, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise where(path, "is required")
        return default
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if kind is not None and not isinstance(v, kind) or isinstance(v, bool) and kind in (int, float):
        raise where(path, f"expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
    return v


def _builder(d, key, table, where, default=None):
    spec = d.get(key)
    if spec is None:
        return default
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict):
        raise where(key, "expected a mapping with 'name' and 'params'")
    unknown = set(spec) - {"name", "params"}
    if unknown:
        raise where(f"{key}.{sorted(unknown)[0]}", "unknown key")
    name = _get(spec, "name", str, where, f"{key}.name", required=True)
    if name not in table:
        raise where(f"{key}.name", f"unknown builder {name!r}; choose from {sorted(table)}")
    params = _get(spec, "params", dict, where, f"{key}.params", {})
    return BuilderSpec(name, dict(params))


def _dataclass_from(cls, d, where, path):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise where(path, "expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for k in d:
        if k not in names:
            raise where(f"{path}.{k}", f"unknown key; allowed: {sorted(names)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise where(path, str(exc)) from None


def from_dict(data: dict, where=None, command: str | None = None) -> RunConfig:
    where = where or _Where("<config>", {})
    for k in data:
        if k not in TOP_KEYS:
            raise where(k, f"unknown key; allowed: {sorted(TOP_KEYS)}")
    task = _get(data, "task", str, where, "task", default=command)
    if task is None:
        raise where("task", "is required")
    if task not in TASKS:
        raise where("task", f"unknown task {task!r}; choose from {list(TASKS)}")
    if command is not None and task not in COMMANDS[command]:
        raise where("task", f"task {task!r} cannot run under the '{command}' command "
                            f"(allowed: {list(COMMANDS[command])})")
    grid = _get(data, "grid", dict, where, "grid", required=True)
    n = _get(grid, "n", int, where, "grid.n", required=True)
    res = _get(grid, "res", int, where, "grid.res", required=True)
    if n not in (1, 2):
        raise where("grid.n", "must be 1 or 2")
    if res < 8 or res & (res - 1):
        raise where("grid.res", "must be a power of two >= 8")
    metric = _builder(data, "metric", METRICS, where, BuilderSpec("flat"))
    rhs = _builder(data, "rhs", RHS, where, BuilderSpec("constant"))
    beta = _builder(data, "beta", METRICS, where)
    lam = _get(data, "lam", float, where, "lam", 1.0)
    seed = _get(data, "seed", int, where, "seed")
    if task in ("solve",) and lam <= 0:
        raise where("lam", "task 'solve' needs lam > 0 (use task 'solve-zero' for lam = 0)")
    if task == "degenerate" and lam not in (0.0, 1.0):
        raise where("lam", "task 'degenerate' supports lam = 1 or lam = 0")
    randomized = task == "verify" or rhs.name == "manufactured"
    if randomized and seed is None:
        # anchored at the key that makes the run randomized
        raise where("task" if task == "verify" else "rhs",
                    f"a seed is mandatory for task {task!r} with rhs {rhs.name!r}")
    solver = _dataclass_from(SolverConfig, data.get("solver"), where, "solver")
    flow_d = dict(data.get("flow") or {})
    if not isinstance(data.get("flow") or {}, dict):
        raise where("flow", "expected a mapping")
    tol = flow_d.pop("agreement_tol", 1e-4)
    flow = _dataclass_from(FlowConfig, flow_d, where, "flow")
    conc = _get(data, "concentration", dict, where, "concentration", {})
    allowed = {"points", "taus", "eps_list", "eps_grid_spacings", "fit_inner", "fit_outer", "slope_tol"}
    for k in conc:
        if k not in allowed:
            raise where(f"concentration.{k}", f"unknown key; allowed: {sorted(allowed)}")
    ver = _get(data, "verify", dict, where, "verify", {})
    for k in ver:
        if k not in ("diagnostics", "samples"):
            raise where(f"verify.{k}", "unknown key; allowed: ['diagnostics', 'samples']")
    diags = ver.get("diagnostics", list(DIAGNOSTICS))
    if not isinstance(diags, list):
        raise where("verify.diagnostics", "expected a list")
    for dname in diags:
        if dname not in DIAGNOSTICS:
            raise where("verify.diagnostics", f"unknown diagnostic {dname!r}; choose from {list(DIAGNOSTICS)}")
    samples = ver.get("samples", {})
    if not isinstance(samples, dict) or any(k not in DIAGNOSTICS for k in samples):
        raise where("verify.samples", "expected a mapping from diagnostic name to sample count")
    for k, v in samples.items():
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise where(f"verify.samples.{k}", "sample counts must be positive integers")
    out = data.get("output") or {}
    if not isinstance(out, dict):
        raise where("output", "expected a mapping with 'dir'")
    odir = _get(out, "dir", str, where, "output.dir", "out")
    return RunConfig(task=task, n=n, res=res, metric=metric, rhs=rhs, beta=beta, lam=lam,
                     seed=seed, solver=solver, flow=flow, flow_agreement_tol=float(tol),
                     concentration=dict(conc), verify={"diagnostics": list(diags), "samples": dict(samples)},
                     output_dir=odir, raw=data)
