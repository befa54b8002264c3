"""Run configuration: YAML file, JSON-Schema validation, typed sections.

Every key has an explicit default; the resolved tree (defaults filled in) is
echoed into each output directory so unstated hyperparameters stay auditable.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigError
from .evalkit import BacktestConfig
from .phase1 import Phase1Config
from .phase2 import Phase2Config
from .proxops import StiefelOptions

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_pos_int = {"type": "integer", "minimum": 1}
_label = {"type": ["string", "integer", "null"]}
_window = {"type": ["array", "null"], "items": _label, "minItems": 2, "maxItems": 2}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "jobs": _pos_int,
    "data": _obj({
        "panel": {"type": ["string", "null"]},
        "columns": _obj({k: {"type": "string"} for k in ("timestamp", "entity", "view", "value")}),
        "transform": {"enum": ["raw", "simple-return", "log-return"]},
        "fill": {"enum": ["reject", "ffill"]},
        "standardize": {"type": "boolean"},
        "views": {"type": ["array", "null"], "items": {"type": "string"}, "minItems": 1},
        "main_view": {"type": ["string", "null"]},
        "window": _window,
    }),
    "phase1": _obj({
        "rho1": _opt_num, "rho2": _opt_num, "u0": _opt_num, "u_max": _opt_num, "u_growth": _num,
        "max_iter": _pos_int, "tol_primal": _num, "tol_dual": _num, "tol_obj": _num,
        "w_solver": {"enum": ["exact", "gradient"]}, "gd_steps": _pos_int,
    }),
    "phase2": _obj({
        "rho3": _opt_num, "k": {"type": ["integer", "null"], "minimum": 1}, "u0": _opt_num,
        "u_max": _opt_num, "u_growth": _num, "max_iter": _pos_int, "tol_primal": _num, "tol_dual": _num,
        "tol_obj": _num,
        "a_update": {"enum": ["eigen+stiefel", "eigen"]},
        "stiefel": _obj({"max_iter": _pos_int, "gtol": _num, "ftol": _num}),
    }),
    "shaker": _obj({
        "r": _pos_int, "top": _pos_int, "source": {"enum": ["W_tilde", "W_hat"]},
    }),
    "eval": _obj({
        "panel": {"type": ["string", "null"]},
        "view": {"type": ["string", "null"]},
        "truth": {"type": ["string", "null"]},
        "truth_panel": {"type": ["string", "null"]},
        "window": _window,
    }),
    "backtest": _obj({
        "p1": _pos_int, "p2": _pos_int, "wp": _num, "q": _num, "initial_cash": _num,
        "transaction_cost": _num, "sell_mode": {"enum": ["all", "fraction"]}, "window": _window,
    }),
    "synth": _obj({
        "n": _pos_int, "v": _pos_int, "s": _pos_int, "k_star": _pos_int,
        "s_theta": {"type": "integer", "minimum": 0}, "s_phi": {"type": "integer", "minimum": 0},
        "sigma": _num, "radius_cap": _num, "theta_scale": _opt_num, "phi_scale": _opt_num,
        "corrupt_views": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
        "burn_in": {"type": "integer", "minimum": 0},
    }),
})

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "data": {
        "panel": None,
        "columns": {"timestamp": "timestamp", "entity": "entity", "view": "view", "value": "value"},
        "transform": "raw",
        "fill": "reject",
        "standardize": True,
        "views": None,
        "main_view": None,
        "window": None,
    },
    "phase1": {**{k: v for k, v in asdict(Phase1Config()).items()}},
    "phase2": {
        **{k: v for k, v in asdict(Phase2Config()).items() if k != "stiefel"},
        "stiefel": {k: getattr(StiefelOptions(), k) for k in ("max_iter", "gtol", "ftol")},
    },
    "shaker": {"r": 3, "top": 10, "source": "W_tilde"},
    "eval": {"panel": None, "view": None, "truth": None, "truth_panel": None, "window": None},
    "backtest": {**{k: v for k, v in asdict(BacktestConfig()).items()}, "window": None},
    "synth": {
        "n": 10, "v": 2, "s": 60, "k_star": 2, "s_theta": 1, "s_phi": 1, "sigma": 0.1,
        "radius_cap": 0.9, "theta_scale": None, "phi_scale": None, "corrupt_views": None, "burn_in": 100,
    },
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _field_path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts += extra[:1]
    elif err.validator == "required":
        parts.append(err.message.split("'")[1])
    return ".".join(parts) or "<root>"


@dataclass
class RunConfig:
    """Resolved configuration tree plus the directory relative paths resolve against."""

    tree: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.tree[key]

    @property
    def seed(self) -> int:
        return self.tree["seed"]

    def path(self, section: str, key: str):
        val = self.tree[section][key]
        if val is None:
            return None
        p = Path(val)
        return p if p.is_absolute() else (self.base_dir / p)

    def phase1(self) -> Phase1Config:
        return _build(Phase1Config, self.tree["phase1"], "phase1")

    def phase2(self) -> Phase2Config:
        sec = dict(self.tree["phase2"])
        st = sec.pop("stiefel")
        cfg = _build(Phase2Config, sec, "phase2")
        cfg.stiefel = StiefelOptions(max_iter=st["max_iter"], gtol=st["gtol"], ftol=st["ftol"])
        return cfg

    def backtest(self) -> BacktestConfig:
        sec = {k: v for k, v in self.tree["backtest"].items() if k != "window"}
        return _build(BacktestConfig, sec, "backtest")

    def echo(self) -> dict:
        """Resolved tree as written into output directories."""
        return copy.deepcopy(self.tree)


def _build(cls, section: dict, name: str):
    try:
        return cls(**section)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split()[0] if msg else ""
        raise ConfigError(msg, field=f"{name}.{key}" if key in section else name) from None


def validate(tree: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(tree), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, field=_field_path(err))


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config (or start from defaults), validate, fill defaults."""
    raw = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("top level must be a mapping")
        base = path.resolve().parent
    validate(raw)
    tree = _merge(DEFAULTS, raw)
    tree = _merge(tree, overrides or {})
    validate(tree)
    cfg = RunConfig(tree, base)
    # surface dataclass-level constraints (u0 <= u_max, q in (0,1], ...) at load time
    cfg.phase1()
    cfg.phase2()
    cfg.backtest()
    return cfg
