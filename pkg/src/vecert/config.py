"""Run configurations: YAML files validated against a versioned JSON schema.

Sets are declared as nodes::

    {box: {lo: [..], hi: [..]}}
    {union: [node, ...]}
    {product: [node, ...]}                 (boxes stacked along coordinates)
    {complement: {outer: node, inner: node}}
    "<region name>"                        (a region declared under system.regions)

Schema violations raise :class:`ConfigError` naming the offending line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .discrete import FiniteTransitionSystem
from .poly import VariableSpace
from .semialg import RegionUnion, SemiAlgebraicSet, box_complement, box_set
from .sysmodel import BuchiAutomaton, DynamicalSystem, LabelingPartition, parse_dynamics
from .synth import LtlSpec, PersistenceSpec, SafetySpec

SCHEMA_VERSION = 1

TASKS = ("synth", "audit", "discrete", "sweep")
SYNTH_KINDS = ("BC", "CC_safety", "CC_persistence", "CC_LTL", "VCBRF_persistence", "VCBRF_LTL",
               "VCC_safety", "VCC_persistence", "VCC_LTL")

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_set_node = {"$ref": "#/$defs/set"}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "task"],
    "$defs": {
        "set": {
            "oneOf": [
                {"type": "string"},
                {"type": "object", "additionalProperties": False, "required": ["box"],
                 "properties": {"box": {"type": "object", "additionalProperties": False,
                                        "required": ["lo", "hi"],
                                        "properties": {"lo": _vec, "hi": _vec}},
                                "label": {"type": "string"}}},
                {"type": "object", "additionalProperties": False, "required": ["union"],
                 "properties": {"union": {"type": "array", "items": _set_node},
                                "label": {"type": "string"}}},
                {"type": "object", "additionalProperties": False, "required": ["product"],
                 "properties": {"product": {"type": "array", "items": _set_node, "minItems": 1},
                                "label": {"type": "string"}}},
                {"type": "object", "additionalProperties": False, "required": ["complement"],
                 "properties": {"complement": {
                     "type": "object", "additionalProperties": False,
                     "required": ["outer", "inner"],
                     "properties": {"outer": _set_node, "inner": _set_node}},
                     "label": {"type": "string"}}},
            ]
        },
        "matrix": _mat,
    },
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "task": {"enum": list(TASKS)},
        "kind": {"enum": list(SYNTH_KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "system": {
            "type": "object", "additionalProperties": False,
            "required": ["variables", "dynamics", "domain", "initial"],
            "properties": {
                "variables": {"type": "integer", "minimum": 1},
                "parameters": {"type": "object", "additionalProperties": _num},
                "dynamics": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "domain": _set_node,
                "initial": _set_node,
                "regions": {"type": "object", "additionalProperties": _set_node},
            },
        },
        "spec": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "unsafe": _set_node,
                "finitely_visited": _set_node,
                "labeling": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["letter", "region"],
                    "properties": {"letter": {"type": "string"}, "region": _set_node}}},
                "labeling_rest": {"type": "string"},
                "automaton": {
                    "type": "object", "additionalProperties": False,
                    "required": ["states", "alphabet", "initial", "accepting", "transitions"],
                    "properties": {
                        "states": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                        "alphabet": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                        "initial": {"type": "array", "items": {"type": "string"}},
                        "accepting": {"type": "array", "items": {"type": "string"}},
                        "transitions": {"type": "array", "items": {
                            "type": "array", "items": {"type": "string"},
                            "minItems": 3, "maxItems": 3}},
                    }},
            },
        },
        "certificate": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "degree": {"type": "integer", "minimum": 1},
                "A": _mat, "A1": _mat, "A2": _mat, "A3": _mat,
                "gamma": {"oneOf": [_num, _vec]},
                "rho": {"oneOf": [_num, _vec]},
                "lambda": _num,
                "assignment": {"oneOf": [{"type": "array", "items": {"type": "integer"}},
                                         {"type": "object",
                                          "additionalProperties": {"type": "integer"}}]},
                "eta_lb": _num,
                "file": {"type": "string"},
            },
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "required": ["degrees", "candidates"],
            "properties": {
                "degrees": {"type": "array", "items": {"type": "integer", "minimum": 1},
                            "minItems": 1},
                "candidates": {"type": "array", "items": {"type": "object"}},
                "exhaustive": {"type": "boolean"},
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "tol": _num, "max_iter": {"type": "integer", "minimum": 1},
                "max_rows": {"type": "integer", "minimum": 1},
                "multiplier_degree_boost": {"type": "integer", "minimum": 0},
                "compile_only": {"type": "boolean"},
            },
        },
        "audit": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["synthesized", "transcribed-rounded"]},
                "samples": {"type": "integer", "minimum": 1},
                "rel_tol": _num,
                "disjunction": {"enum": ["assigned", "strict"]},
            },
        },
        "trajectory": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "region": {"type": "string"},
                "count": {"type": "integer", "minimum": 1},
                "steps": {"type": "integer", "minimum": 1},
            },
        },
        "finite_system": {
            "type": "object", "additionalProperties": False,
            "required": ["states", "embedding", "initial", "unsafe", "edges"],
            "properties": {
                "states": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "embedding": {"type": "object", "additionalProperties": _num},
                "initial": {"type": "array", "items": {"type": "string"}},
                "unsafe": {"type": "array", "items": {"type": "string"}},
                "edges": {"type": "array", "items": {
                    "type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}},
            },
        },
        "discrete": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "lambda_grid": {"type": "object", "additionalProperties": False,
                                "required": ["start", "stop", "step"],
                                "properties": {"start": _num, "stop": _num, "step": _num}},
                "cc_eta": _num,
                "cc_modes": {"type": "array", "items": {"enum": ["printed", "full"]}},
                "printed_vcc": {
                    "type": "object", "additionalProperties": False,
                    "required": ["T", "A", "eta"],
                    "properties": {"T": {"type": "array", "items": {"type": "string"}},
                                   "A": _mat, "eta": _num,
                                   "rounding_tol": _num}},
                "synth_vcc": {
                    "type": "object", "additionalProperties": False,
                    "required": ["A", "eta"],
                    "properties": {"A": _mat, "eta": _num,
                                   "assignment": {"type": "object",
                                                  "additionalProperties": {"type": "integer"}}}},
            },
        },
        "reference": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "system": {"type": "string"}, "method": {"type": "string"},
                "degree": {"type": ["integer", "string"]}, "time_s": {"type": ["number", "null"]},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid configuration; messages name the file and line."""


# ---------------------------------------------------------------------------
# loading and validation


def _node_at(root: yaml.Node, path) -> yaml.Node:
    node = root
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                return node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


def _line(root, path, where: str) -> str:
    node = _node_at(root, list(path))
    return f"{where}:{node.start_mark.line + 1}"


def _unknown_key_line(root, err, where: str) -> str:
    """Line of the first key (in document order) that the schema does not allow."""
    node = _node_at(root, list(err.absolute_path))
    allowed = set(err.schema.get("properties", {}))
    if isinstance(node, yaml.MappingNode):
        for k, _ in node.value:
            if k.value not in allowed:
                return f"{where}:{k.start_mark.line + 1}"
    return _line(root, err.absolute_path, where)


def _best_error(errors):
    return jsonschema.exceptions.best_match(errors)


@dataclass
class RunConfig:
    path: Path
    data: dict
    root: Any = field(repr=False, default=None)

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def task(self) -> str:
        return self.data["task"]

    @property
    def kind(self) -> str | None:
        return self.data.get("kind")

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    def section(self, key: str) -> dict:
        return dict(self.data.get(key) or {})

    def where(self, *path) -> str:
        return _line(self.root, path, str(self.path)) if self.root is not None else str(self.path)


def loads(text: str, where: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{where}{line}: YAML syntax error: {getattr(e, 'problem', e)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{where}:1: configuration must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = list(validator.iter_errors(data))
    if errors:
        err = _best_error(errors)
        path = list(err.absolute_path)
        msg = err.message
        line = _line(root, path, where)
        if err.validator == "additionalProperties":
            msg = f"unknown key: {msg}"
            line = _unknown_key_line(root, err, where)
        loc = ".".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{line}: {loc}: {msg}")
    cfg = RunConfig(Path(where), data, root)
    _semantic_checks(cfg)
    return cfg


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read configuration: {e.strerror}") from None
    return loads(text, str(path))


def shipped_config_dir() -> Path:
    return Path(str(resources.files("vecert") / "data" / "configs"))


def shipped_certificate_dir() -> Path:
    return Path(str(resources.files("vecert") / "data" / "certificates"))


def load_shipped(name: str) -> RunConfig:
    return load(shipped_config_dir() / (name if name.endswith(".cfg") else name + ".cfg"))


def _semantic_checks(cfg: RunConfig):
    d = cfg.data
    if cfg.task in ("synth", "audit", "sweep"):
        for key in ("kind", "system", "spec"):
            if key not in d:
                raise ConfigError(f"{cfg.where()}: task {cfg.task!r} needs a {key!r} section")
    if cfg.task == "sweep" and "sweep" not in d:
        raise ConfigError(f"{cfg.where()}: task 'sweep' needs a 'sweep' section")
    if cfg.task == "discrete" and "finite_system" not in d:
        raise ConfigError(f"{cfg.where()}: task 'discrete' needs a 'finite_system' section")
    cert = d.get("certificate") or {}
    for name in ("A", "A1", "A2", "A3"):
        if name in cert:
            _check_matrix(cfg, cert[name], ("certificate", name), name)
    for i, cand in enumerate((d.get("sweep") or {}).get("candidates", [])):
        for name in ("A", "A1", "A2", "A3"):
            if name in cand:
                _check_matrix(cfg, cand[name], ("sweep", "candidates", i, name), name)
    for name in ("printed_vcc", "synth_vcc"):
        blk = (d.get("discrete") or {}).get(name)
        if blk:
            _check_matrix(cfg, blk["A"], ("discrete", name, "A"), "A")
            if not blk["eta"] > 0:
                raise ConfigError(f"{cfg.where('discrete', name, 'eta')}: eta must be > 0 "
                                  "(the exclusion condition is strict)")
    if "eta_lb" in cert and not cert["eta_lb"] > 0:
        raise ConfigError(f"{cfg.where('certificate', 'eta_lb')}: eta_lb must be > 0")
    if "lambda" in cert and cert["lambda"] < 0:
        raise ConfigError(f"{cfg.where('certificate', 'lambda')}: lambda must be nonnegative")
    sysd = d.get("system")
    if sysd and len(sysd["dynamics"]) != sysd["variables"]:
        raise ConfigError(f"{cfg.where('system', 'dynamics')}: {len(sysd['dynamics'])} dynamics "
                          f"components for {sysd['variables']} variables")


def _check_matrix(cfg: RunConfig, M, path, name: str):
    rows = len(M)
    if any(len(r) != rows for r in M):
        raise ConfigError(f"{cfg.where(*path)}: matrix {name} must be square")
    if any(v < 0 for r in M for v in r):
        raise ConfigError(f"{cfg.where(*path)}: matrix {name} must be entrywise nonnegative "
                          "(A in R>=0^(k x k) is required)")


# ---------------------------------------------------------------------------
# construction of problem objects


class _Sets:
    def __init__(self, cfg: RunConfig, space: VariableSpace, regions: dict):
        self.cfg = cfg
        self.space = space
        self.raw = regions
        self.cache: dict[str, RegionUnion] = {}

    def union(self, node, path, label: str = "") -> RegionUnion:
        if isinstance(node, str):
            if node not in self.raw:
                raise ConfigError(f"{self.cfg.where(*path)}: unknown region {node!r}")
            if node not in self.cache:
                self.cache[node] = self.union(self.raw[node], ("system", "regions", node), node)
            return self.cache[node]
        label = node.get("label", label)
        if "union" in node:
            pieces: list[SemiAlgebraicSet] = []
            for i, sub in enumerate(node["union"]):
                pieces.extend(self.union(sub, path + ("union", i), f"{label}{i + 1}").pieces)
            pieces = [SemiAlgebraicSet(p.space, p.constraints, f"{label}[{i}]" if label else p.label,
                                       p.lo, p.hi, p.is_box) for i, p in enumerate(pieces)]
            return RegionUnion(self.space, tuple(pieces), label)
        if "complement" in node:
            outer = self.single(node["complement"]["outer"], path + ("complement", "outer"))
            inner = self.union(node["complement"]["inner"], path + ("complement", "inner"))
            try:
                return box_complement(outer, inner, label or "complement")
            except ValueError as e:
                raise ConfigError(f"{self.cfg.where(*path)}: {e}") from None
        return RegionUnion(self.space, (self.single(node, path, label),), label)

    def single(self, node, path, label: str = "") -> SemiAlgebraicSet:
        if isinstance(node, str):
            u = self.union(node, path)
            if len(u) != 1:
                raise ConfigError(f"{self.cfg.where(*path)}: region {node!r} is not a single set")
            return u.pieces[0]
        label = node.get("label", label)
        lo, hi = self._bounds(node, path)
        if len(lo) != self.space.arity:
            raise ConfigError(f"{self.cfg.where(*path)}: set has dimension {len(lo)}, "
                              f"system has {self.space.arity}")
        try:
            return box_set(lo, hi, self.space, label)
        except ValueError as e:
            raise ConfigError(f"{self.cfg.where(*path)}: {e}") from None

    def _bounds(self, node, path) -> tuple[list[float], list[float]]:
        if "box" in node:
            lo, hi = list(node["box"]["lo"]), list(node["box"]["hi"])
            if len(lo) != len(hi):
                raise ConfigError(f"{self.cfg.where(*path)}: box lo/hi lengths differ")
            return lo, hi
        if "product" in node:
            lo, hi = [], []
            for i, sub in enumerate(node["product"]):
                if not isinstance(sub, dict) or not ({"box", "product"} & set(sub)):
                    raise ConfigError(f"{self.cfg.where(*path)}: product factors must be boxes")
                a, b = self._bounds(sub, path + ("product", i))
                lo += a
                hi += b
            return lo, hi
        raise ConfigError(f"{self.cfg.where(*path)}: expected a box or product of boxes")


def build_system(cfg: RunConfig) -> tuple[DynamicalSystem, _Sets]:
    s = cfg.data["system"]
    n = s["variables"]
    space = VariableSpace.of("x", n)
    params = dict(s.get("parameters") or {})
    params.setdefault("pi", math.pi)
    try:
        f = parse_dynamics(s["dynamics"], space, params)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"{cfg.where('system', 'dynamics')}: {e}") from None
    sets = _Sets(cfg, space, dict(s.get("regions") or {}))
    X = sets.single(s["domain"], ("system", "domain"), "X")
    X0 = sets.single(s["initial"], ("system", "initial"), "X0")
    regions = {name: sets.union(name, ("system", "regions", name)) for name in sets.raw}
    return DynamicalSystem(space, f, X, X0, regions, cfg.name), sets


def build_spec(cfg: RunConfig):
    """Problem specification matching ``cfg.kind``."""
    sys_, sets = build_system(cfg)
    sp = cfg.data["spec"]
    kind = cfg.kind
    if kind in ("BC", "CC_safety", "VCC_safety"):
        if "unsafe" not in sp:
            raise ConfigError(f"{cfg.where('spec')}: safety kinds need spec.unsafe")
        return SafetySpec(sys_, sets.union(sp["unsafe"], ("spec", "unsafe"), "Xu"))
    if kind in ("CC_persistence", "VCC_persistence", "VCBRF_persistence"):
        if "finitely_visited" not in sp:
            raise ConfigError(f"{cfg.where('spec')}: persistence kinds need spec.finitely_visited")
        return PersistenceSpec(sys_, sets.union(sp["finitely_visited"], ("spec", "finitely_visited"),
                                                "XVF"))
    if "labeling" not in sp or "automaton" not in sp:
        raise ConfigError(f"{cfg.where('spec')}: LTL kinds need spec.labeling and spec.automaton")
    letters = []
    for i, ent in enumerate(sp["labeling"]):
        letters.append((ent["letter"], sets.union(ent["region"], ("spec", "labeling", i, "region"),
                                                  ent["letter"])))
    if "labeling_rest" in sp:
        covered = RegionUnion(sys_.space, tuple(p for _, u in letters for p in u.pieces))
        try:
            rest = box_complement(sys_.X, covered, sp["labeling_rest"])
        except ValueError as e:
            raise ConfigError(f"{cfg.where('spec', 'labeling_rest')}: {e}") from None
        letters.append((sp["labeling_rest"], rest))
    a = sp["automaton"]
    try:
        aut = BuchiAutomaton(tuple(a["states"]), tuple(a["alphabet"]), frozenset(a["initial"]),
                             tuple(tuple(t) for t in a["transitions"]), frozenset(a["accepting"]))
        lab = LabelingPartition(tuple(letters))
    except ValueError as e:
        raise ConfigError(f"{cfg.where('spec', 'automaton')}: {e}") from None
    missing = set(aut.alphabet) - set(lab.names)
    if missing:
        raise ConfigError(f"{cfg.where('spec', 'labeling')}: letters {sorted(missing)} have no region")
    return LtlSpec(sys_, lab, aut)


def build_finite_system(cfg: RunConfig) -> FiniteTransitionSystem:
    fs = cfg.data["finite_system"]
    try:
        return FiniteTransitionSystem(tuple(fs["states"]), dict(fs["embedding"]), set(fs["initial"]),
                                      set(fs["unsafe"]), tuple(tuple(e) for e in fs["edges"]),
                                      cfg.name)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"{cfg.where('finite_system')}: {e}") from None


def lambda_grid(spec: dict) -> list[float]:
    start, stop, step = spec["start"], spec["stop"], spec["step"]
    if not step > 0 or stop < start:
        raise ValueError("lambda grid needs step > 0 and stop >= start")
    n = int(round((stop - start) / step))
    return [round(start + i * step, 12) for i in range(n + 1)]


def matrix(v) -> np.ndarray:
    return np.asarray(v, dtype=float)
