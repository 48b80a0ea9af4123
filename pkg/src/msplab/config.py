"""Experiment configuration files and run manifests.

Configs are INI files read with :mod:`configparser`::

    [experiment]
    kind = fig1-compare
    target = z1 + z1z2
    seeds = 0, 1

    [hyperparams]
    eta = 0.5
    horizon = 100

    [activation]
    spec = shifted-sigmoid(shift=0.5)

A manifest is the same file with a ``[manifest]`` section appended, so it can
be fed back with ``--config``.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field, fields, replace

from . import __version__
from .activation import Activation
from .dynamics import Distribution, HyperParams, Schedule
from .fourier import FourierFunction, from_string, loads
from .presets import PRESETS, Preset

KINDS = (
    "fig1-compare", "msp-check", "stuck-dynamics", "two-phase-certify", "recurrence-verify",
    "lower-bound-sweep", "symmetry-escape", "dfpde", "sgd",
)

_HP_FLOATS = ("eta", "lambda_a", "lambda_w", "noise", "horizon", "record_interval")
_HP_INTS = ("batch", "test_size")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def parse_activation(text: str) -> Activation:
    """Inverse of :meth:`Activation.ident` for the non-perturbed families."""
    text = text.strip()
    m = re.fullmatch(r"([a-z-]+)(?:\((.*)\))?", text)
    if m is None:
        raise ValueError(f"cannot parse activation {text!r}")
    kind, args = m.group(1), (m.group(2) or "").strip()
    kw = dict(part.split("=", 1) for part in args.split(",") if "=" in part)
    if kind == "shifted-sigmoid":
        return Activation.shifted_sigmoid(float(kw.get("shift", 0.5)))
    if kind == "tanh":
        return Activation.tanh()
    if kind == "truncated-power":
        return Activation.truncated_power(int(kw.get("L", 8)))
    if kind == "polynomial":
        return Activation.polynomial([float(x) for x in args.split(",") if x.strip()])
    raise ValueError(f"activation {kind!r} cannot be given in a config")


def parse_target(text: str) -> FourierFunction:
    """Inline target: either the ``P=..; S=.. alpha=..`` format or a sum like ``z1 + z1z2``."""
    return loads(text) if "P=" in text else from_string(text)


@dataclass
class ExperimentConfig:
    kind: str
    target: str
    activation: str
    hp: HyperParams
    seeds: tuple[int, ...] = (0,)
    d: int = 100
    width: int = 100
    delta: float = 0.01
    method: str = "euler"
    out: str = "runs"
    preset: str | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_preset(cls, p: Preset) -> "ExperimentConfig":
        return cls(p.kind, p.target, p.activation, p.hp, p.seeds, p.d, p.width, p.delta, preset=p.name,
                   options=dict(p.options))

    def function(self) -> FourierFunction:
        try:
            return parse_target(self.target)
        except ValueError as exc:
            raise ConfigError("experiment.target", str(exc)) from None

    def act(self) -> Activation:
        try:
            return parse_activation(self.activation)
        except ValueError as exc:
            raise ConfigError("activation.spec", str(exc)) from None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seeds=(int(seed),))

    # text form

    def to_parser(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {
            "kind": self.kind, "target": self.target, "seeds": ", ".join(map(str, self.seeds)),
            "d": str(self.d), "width": str(self.width), "delta": repr(self.delta), "method": self.method,
            "out": self.out,
        }
        if self.preset:
            cp["experiment"]["preset"] = self.preset
        hp = self.hp.as_dict()
        cp["hyperparams"] = {k: (repr(v) if isinstance(v, float) else str(v)) for k, v in hp.items()
                             if k != "latent" or v is not None}
        if hp.get("latent") is not None:
            cp["hyperparams"]["latent"] = ", ".join(map(str, hp["latent"]))
        cp["activation"] = {"spec": self.activation}
        if self.options:
            cp["options"] = {k: str(v) for k, v in sorted(self.options.items())}
        return cp

    def dumps(self) -> str:
        buf = io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()


def _hyperparams(section, base: HyperParams) -> HyperParams:
    known = {f.name for f in fields(HyperParams)}
    updates = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"hyperparams.{key}", "unknown hyperparameter")
        try:
            if key in _HP_FLOATS:
                updates[key] = float(raw)
            elif key in _HP_INTS:
                updates[key] = int(raw)
            elif key in ("xi_a", "xi_w"):
                updates[key] = Schedule.decode(raw)
            elif key in ("mu_a", "mu_w"):
                updates[key] = Distribution.decode(raw)
            elif key == "latent":
                updates[key] = None if raw.strip() in ("", "None") else tuple(int(x) for x in raw.split(","))
        except ValueError as exc:
            raise ConfigError(f"hyperparams.{key}", str(exc)) from None
    try:
        return replace(base, **updates)
    except ValueError as exc:
        raise ConfigError("hyperparams", str(exc)) from None


def loads_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    ex = cp["experiment"] if cp.has_section("experiment") else {}
    preset = ex.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("experiment.preset", f"unknown preset {preset!r}")
        cfg = ExperimentConfig.from_preset(PRESETS[preset])
    else:
        if "target" not in ex:
            raise ConfigError("experiment.target", "missing (give a target or a preset)")
        cfg = ExperimentConfig("dfpde", ex["target"], "shifted-sigmoid(shift=0.5)", HyperParams())
    try:
        cfg.kind = ex.get("kind", cfg.kind)
        cfg.target = ex.get("target", cfg.target)
        if "seeds" in ex:
            cfg.seeds = tuple(int(s) for s in ex["seeds"].split(",") if s.strip())
        cfg.d = int(ex.get("d", cfg.d))
        cfg.width = int(ex.get("width", cfg.width))
        cfg.delta = float(ex.get("delta", cfg.delta))
        cfg.method = ex.get("method", cfg.method)
        cfg.out = ex.get("out", cfg.out)
    except ValueError as exc:
        raise ConfigError("experiment", str(exc)) from None
    if cfg.kind not in KINDS:
        raise ConfigError("experiment.kind", f"unknown kind {cfg.kind!r}; expected one of {', '.join(KINDS)}")
    if cfg.method not in ("euler", "rk4"):
        raise ConfigError("experiment.method", "must be euler or rk4")
    if not cfg.delta > 0:
        raise ConfigError("experiment.delta", "must be positive")
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError("experiment.seeds", "seeds must be nonnegative")
    if cp.has_section("hyperparams"):
        cfg.hp = _hyperparams(cp["hyperparams"], cfg.hp)
    if cp.has_section("activation") and "spec" in cp["activation"]:
        cfg.activation = cp["activation"]["spec"]
    if cp.has_section("options"):
        cfg.options.update(dict(cp["options"]))
    cfg.function()
    cfg.act()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return loads_config(fh.read())
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None


def manifest_text(cfg: ExperimentConfig, command: str, wall_time: float, outputs: list[str]) -> str:
    cp = cfg.to_parser()
    cp["manifest"] = {
        "command": command, "version": __version__, "wall_time": f"{wall_time:.3f}",
        "outputs": ", ".join(outputs),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
