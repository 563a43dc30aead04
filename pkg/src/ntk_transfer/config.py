"""INI-style experiment configuration.

Example::

    [kernel]
    depth = 3
    sigma_w_sq = 2
    sigma_b_sq = 0
    input_dim = 10

    [spectrum]
    k_max = 100
    r = 1000

    [experiment]
    protocol = single, sequential, average
    N_A = 100
    N_B = 100
    rho = 0, 0.5, 1
    trials = 50

List values are comma separated; ``a*n`` repeats ``a`` n times and ``;``
separates several task-size sequences in ``N_list``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from .errors import ConfigError
from .kernel import KernelParams

PROTOCOLS = ("single", "sequential", "average", "block")

_num_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["kernel", "spectrum", "experiment"],
    "additionalProperties": False,
    "properties": {
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["relu_ntk", "linear"]},
                "depth": {"type": "integer", "minimum": 1},
                "sigma_w_sq": {"type": "number", "exclusiveMinimum": 0},
                "sigma_b_sq": {"type": "number", "minimum": 0},
                "input_dim": {"type": "integer", "minimum": 2},
            },
        },
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_max": {"type": "integer", "minimum": 1},
                "r": {"type": "integer", "minimum": 2},
                "file": {"type": ["string", "null"]},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "protocol": {"type": "array", "minItems": 1,
                             "items": {"enum": list(PROTOCOLS)}},
                "N_A": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "N_B": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "pairing": {"enum": ["product", "zip"]},
                "constant_mode": {"enum": ["drop", "keep"]},
                "rho": {**_num_list, "items": {"type": "number", "minimum": -1, "maximum": 1}},
                "sigma_sq": {**_num_list, "items": {"type": "number", "minimum": 0}},
                "N_list": {"type": "array", "items": {
                    "type": "array", "minItems": 1,
                    "items": {"type": "integer", "minimum": 1}}},
                "trials": {"type": "integer", "minimum": 1},
                "n_test": {"type": "integer", "minimum": 2},
                "P_prime": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}


@dataclass(frozen=True)
class SpectrumSettings:
    k_max: int = 100
    r: int = 1000
    file: Optional[str] = None


@dataclass(frozen=True)
class ExperimentSettings:
    protocol: tuple = ("single", "sequential")
    N_A: tuple = (100,)
    N_B: tuple = (100,)
    pairing: str = "product"
    constant_mode: str = "drop"
    rho: tuple = (1.0,)
    sigma_sq: tuple = (0.0,)
    N_list: tuple = ()
    trials: int = 50
    n_test: int = 4000
    P_prime: int = 10_000
    seed: int = 0

    @property
    def size_pairs(self):
        if self.pairing == "zip":
            if len(self.N_A) != len(self.N_B):
                raise ConfigError("experiment.pairing = zip needs N_A and N_B of equal length")
            return list(zip(self.N_A, self.N_B))
        return [(a, b) for a in self.N_A for b in self.N_B]


@dataclass(frozen=True)
class Config:
    kernel: KernelParams = field(default_factory=KernelParams)
    kernel_kind: str = "relu_ntk"
    spectrum: SpectrumSettings = field(default_factory=SpectrumSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    source: Optional[str] = None

    def to_dict(self) -> dict:
        k, s, e = self.kernel, self.spectrum, self.experiment
        return {
            "kernel": {"kind": self.kernel_kind, "depth": k.depth, "sigma_w_sq": k.sigma_w_sq,
                       "sigma_b_sq": k.sigma_b_sq, "input_dim": k.input_dim},
            "spectrum": {"k_max": s.k_max, "r": s.r, "file": s.file},
            "experiment": {
                "protocol": list(e.protocol), "N_A": list(e.N_A), "N_B": list(e.N_B),
                "pairing": e.pairing, "constant_mode": e.constant_mode,
                "rho": list(e.rho), "sigma_sq": list(e.sigma_sq),
                "N_list": [list(x) for x in e.N_list], "trials": e.trials,
                "n_test": e.n_test, "P_prime": e.P_prime, "seed": e.seed,
            },
        }

    def with_seed(self, seed: int) -> "Config":
        e = self.experiment
        exp = ExperimentSettings(**{**e.__dict__, "seed": int(seed)})
        return Config(self.kernel, self.kernel_kind, self.spectrum, exp, self.source)


def _split_numbers(text: str, cast):
    out = []
    for tok in text.replace("\n", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "*" in tok:
            value, count = tok.split("*", 1)
            out.extend([cast(value.strip())] * int(count))
        else:
            out.append(cast(tok))
    return out


def _integer(tok: str) -> int:
    value = float(tok)
    if not value.is_integer():
        raise ValueError(f"{tok!r} is not an integer")
    return int(value)


_LIST_FIELDS = {"N_A": _integer, "N_B": _integer, "rho": float, "sigma_sq": float}
_INT_FIELDS = {"depth", "input_dim", "k_max", "r", "trials", "n_test", "P_prime", "seed"}
_FLOAT_FIELDS = {"sigma_w_sq", "sigma_b_sq"}


def _parse_value(section: str, key: str, raw: str):
    where = f"[{section}] {key}"
    try:
        if key in _LIST_FIELDS:
            return _split_numbers(raw, _LIST_FIELDS[key])
        if key == "N_list":
            return [_split_numbers(part, _integer) for part in raw.split(";") if part.strip()]
        if key == "protocol":
            return [p.strip() for p in raw.split(",") if p.strip()]
        if key in _INT_FIELDS:
            return _integer(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key == "file":
            return raw.strip() or None
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(text: str, source: Optional[str] = None) -> Config:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"{source or 'config'}: {exc}") from exc
    raw = {name: {k: _parse_value(name, k, v) for k, v in cp.items(name)}
           for name in cp.sections()}
    for name in ("kernel", "spectrum", "experiment"):
        raw.setdefault(name, {})
    return from_dict(raw, source)


def from_dict(raw: dict, source: Optional[str] = None) -> Config:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = ".".join(str(p) for p in first.absolute_path) or "<root>"
        raise ConfigError(f"{source or 'config'}: {path}: {first.message}")
    k = dict(raw["kernel"])
    kind = k.pop("kind", "relu_ntk")
    exp = dict(raw["experiment"])
    for key in ("protocol", "N_A", "N_B", "rho", "sigma_sq"):
        if key in exp:
            exp[key] = tuple(exp[key])
    if "N_list" in exp:
        exp["N_list"] = tuple(tuple(x) for x in exp["N_list"])
    try:
        kernel = KernelParams(**k)
    except ConfigError as exc:
        raise ConfigError(f"{source or 'config'}: kernel: {exc}") from exc
    return Config(kernel, kind, SpectrumSettings(**raw["spectrum"]),
                  ExperimentSettings(**exp), source)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text, str(path))
    spec_file = cfg.spectrum.file
    if spec_file and not Path(spec_file).is_absolute():
        # spectrum files are located relative to the config that names them
        resolved = SpectrumSettings(cfg.spectrum.k_max, cfg.spectrum.r,
                                    str(path.parent / spec_file))
        cfg = Config(cfg.kernel, cfg.kernel_kind, resolved, cfg.experiment, cfg.source)
    return cfg


def bundled_config(name: str) -> Config:
    """Load one of the configs shipped with the package, e.g. ``fig1a``."""
    path = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return load_config(path)
