"""Strict JSON run configuration with documented defaults.

Top-level keys: ``mode`` ("synthetic" or "image") and the sections ``data``,
``space``, ``search``, ``attack``, ``resource``, ``retrain``. Keys left out or
set to null take the defaults below; ``mode`` only changes the attack and
resource defaults:

=========================  ================  ============
key                        synthetic         image
=========================  ================  ============
attack.epsilon             0.1               2/255
attack.xi                  1.25 * epsilon    1.25 * epsilon
attack.input_range         null              [0, 1]
resource.unit              raw-count         megabytes
resource.lower_bound       d*d + d           1
=========================  ================  ============
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .adversarial import AttackConfig
from .bilevel import SearchConfig
from .data import KINDS, Dataset, generate, load_csv, split_half, standardize
from .resource import UNITS, ResourceConfig
from .supernet import DEFAULT_OPS, OP_KINDS, SearchSpace

MODES = ("synthetic", "image")


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    kind: str | None = "moons"
    path: str | None = None
    test_path: str | None = None
    label_column: str = "label"
    n: int = 400
    noise: float = 0.15
    seed: int = 0
    standardize: bool = False


@dataclass
class SpaceSection:
    nodes: int = 5
    width: int | None = None
    ops: list = field(default_factory=lambda: list(DEFAULT_OPS))
    cells: int = 1
    exclude_zero: bool = False


@dataclass
class SearchSection:
    eta_theta: float = 0.025
    eta_alpha: float = 3e-4
    batch_size: int = 64
    steps: int = 2000
    seed: int = 0
    use_adv: bool = True
    use_nop: bool = True
    use_mgda: bool = True
    second_order: bool = True
    momentum: float = 0.9
    weight_decay: float = 3e-4
    eval_every: int = 0


@dataclass
class AttackSection:
    epsilon: float | None = None
    xi: float | None = None
    steps: int = 10
    random_start: bool = False
    pgd_step_scale: float = 2.5
    input_range: list | None = None


@dataclass
class ResourceSection:
    lower_bound: float | None = None
    unit: str | None = None


@dataclass
class RetrainSection:
    steps: int = 1000
    adversarial: bool | None = None


SECTIONS = {
    "data": DataSection,
    "space": SpaceSection,
    "search": SearchSection,
    "attack": AttackSection,
    "resource": ResourceSection,
    "retrain": RetrainSection,
}


@dataclass
class RunConfig:
    mode: str = "synthetic"
    data: DataSection = field(default_factory=DataSection)
    space: SpaceSection = field(default_factory=SpaceSection)
    search: SearchSection = field(default_factory=SearchSection)
    attack: AttackSection = field(default_factory=AttackSection)
    resource: ResourceSection = field(default_factory=ResourceSection)
    retrain: RetrainSection = field(default_factory=RetrainSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # derived objects

    def search_space(self, width: int | None = None) -> SearchSpace:
        w = self.space.width if self.space.width is not None else width
        if w is None:
            raise ConfigError("space.width is unresolved")
        return SearchSpace.from_names(self.space.nodes, w, self.space.ops, self.space.cells)

    def train_attack(self) -> AttackConfig:
        return AttackConfig(self.attack.epsilon, self.attack.xi, 1, True, _range(self.attack.input_range))

    def eval_attack(self) -> AttackConfig:
        step = self.attack.pgd_step_scale * self.attack.epsilon
        return AttackConfig(
            self.attack.epsilon, step if step > 0 else self.attack.xi, self.attack.steps,
            self.attack.random_start, _range(self.attack.input_range),
        )

    def resource_config(self) -> ResourceConfig:
        if self.resource.lower_bound is None:
            raise ConfigError("resource.lower_bound is unresolved until the data width is known")
        return ResourceConfig(self.resource.lower_bound, self.resource.unit)

    def search_config(self) -> SearchConfig:
        s = self.search
        return SearchConfig(
            eta_theta=s.eta_theta, eta_alpha=s.eta_alpha, batch_size=s.batch_size, steps=s.steps,
            seed=s.seed, use_adv=s.use_adv, use_nop=s.use_nop, use_mgda=s.use_mgda,
            second_order=s.second_order, momentum=s.momentum, weight_decay=s.weight_decay,
            eval_every=s.eval_every, attack=self.train_attack(), eval_attack=self.eval_attack(),
            resource=self.resource_config(),
        )


def _range(r) -> tuple[float, float] | None:
    return None if r is None else (float(r[0]), float(r[1]))


def _check_type(section: str, key: str, value: Any, default: Any, annotation: str) -> Any:
    where = f"{section}.{key}"
    if value is None:
        if "None" not in annotation:
            raise ConfigError(f"{where} may not be null")
        return None
    if "bool" in annotation:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean, got {value!r}")
        return value
    if annotation.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if annotation.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if annotation.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if annotation.startswith("list"):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list, got {value!r}")
        return value
    return value


def _section(name: str, raw: Any):
    cls = SECTIONS[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    obj = cls()
    for key, value in raw.items():
        f = known[key]
        if value is None and "None" not in str(f.type):
            continue  # null means "use the default"
        setattr(obj, key, _check_type(name, key, value, getattr(obj, key), str(f.type)))
    return obj


def parse_config(raw: dict) -> RunConfig:
    """Validate a config document and fill in every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - {"mode", *SECTIONS})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    mode = raw.get("mode", "synthetic")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    cfg = RunConfig(mode=mode, **{name: _section(name, raw.get(name)) for name in SECTIONS})
    _resolve(cfg)
    return cfg


def _resolve(cfg: RunConfig) -> None:
    d, sp, se, at, rs = cfg.data, cfg.space, cfg.search, cfg.attack, cfg.resource
    image = cfg.mode == "image"
    if d.path is None:
        if d.kind not in KINDS:
            raise ConfigError(f"data.kind must be one of {KINDS}, got {d.kind!r}")
        if d.n < 2 or d.noise < 0:
            raise ConfigError("data.n must be >= 2 and data.noise >= 0")
        if sp.width is None:
            sp.width = 2
    else:
        d.kind = None
    for op in sp.ops:
        if op not in OP_KINDS:
            raise ConfigError(f"space.ops: unknown operation {op!r}")
    if at.epsilon is None:
        at.epsilon = 2 / 255 if image else 0.1
    if at.xi is None:
        # with epsilon 0 every step is clipped away; any positive xi will do
        at.xi = 1.25 * at.epsilon if at.epsilon > 0 else 1.0
    if at.input_range is None and image:
        at.input_range = [0.0, 1.0]
    if at.input_range is not None and len(at.input_range) != 2:
        raise ConfigError("attack.input_range must be [lo, hi]")
    if rs.unit is None:
        rs.unit = "megabytes" if image else "raw-count"
    if rs.unit not in UNITS:
        raise ConfigError(f"resource.unit must be one of {UNITS}")
    if cfg.retrain.adversarial is None:
        cfg.retrain.adversarial = se.use_adv
    if sp.width is not None:
        _resolve_lower_bound(cfg, sp.width)
    try:
        if sp.width is not None:
            cfg.search_space()
            cfg.search_config()
        else:
            # lower bound waits for the CSV width; validate everything else now
            probe = replace(cfg, resource=replace(rs, lower_bound=rs.lower_bound or 0.0))
            probe.search_config()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _resolve_lower_bound(cfg: RunConfig, width: int) -> None:
    if cfg.resource.lower_bound is None:
        if cfg.mode == "image":
            cfg.resource.lower_bound = 1.0
        else:
            count = width * width + width
            cfg.resource.lower_bound = float(ResourceConfig(0.0, cfg.resource.unit).convert(count))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset

    @property
    def full(self) -> Dataset:
        return Dataset(
            np.concatenate([self.train.inputs, self.val.inputs]),
            np.concatenate([self.train.labels, self.val.labels]),
            max(self.train.num_classes, self.val.num_classes),
            self.train.provenance + "+val",
        )


def load_data(cfg: RunConfig) -> Splits:
    """Search halves plus a test set; fixes ``space.width`` from CSV data when unset.

    Synthetic test data is a fresh draw with ``data.seed + 1``. CSV data without
    ``test_path`` uses the validation half as test set.
    """
    d = cfg.data
    if d.path is None:
        full = generate(d.kind, d.n, d.noise, d.seed)
        test = generate(d.kind, d.n, d.noise, d.seed + 1)
    else:
        full = load_csv(d.path, d.label_column)
        test = load_csv(d.test_path, d.label_column) if d.test_path else None
    train, val = split_half(full, d.seed)
    if test is None:
        test = val
    if d.standardize:
        train, val, test = standardize(train, val, test)
    if cfg.space.width is None:
        cfg.space.width = full.width
        _resolve_lower_bound(cfg, full.width)
    if full.width != cfg.space.width:
        raise ConfigError(f"data width {full.width} does not match space.width {cfg.space.width}")
    return Splits(train, val, test)
