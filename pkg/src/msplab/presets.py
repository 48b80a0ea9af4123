"""Named experiment presets: the four-step staircase comparison, leap targets and symmetric targets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .dynamics import Distribution, HyperParams

FIG1_TARGET = "z1 + z1z2 + z1z2z3 + z1z2z3z4"


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str
    target: str
    activation: str
    hp: HyperParams
    d: int = 100
    width: int = 100
    seeds: tuple[int, ...] = (0,)
    delta: float = 0.01
    options: dict = field(default_factory=dict)


_FIG1_HP = HyperParams(
    eta=0.5, batch=150, lambda_a=0.0, lambda_w=0.0,
    mu_a=Distribution("uniform", (-1.0, 1.0)), mu_w=Distribution("normal", (0.0, 1.0)),
    horizon=2000.0, record_interval=10.0, test_size=300,
)

# unit-variance first-layer init gives s0 = 1 in the dimension-free limit
_APPA_HP = HyperParams(
    eta=0.5, mu_a=Distribution("uniform", (-1.0, 1.0)), mu_w=Distribution("normal", (0.0, 1.0)),
    horizon=500.0, record_interval=5.0,
)

_APPA_TARGETS = {
    "appA-h1": "z1 + z1z2 + z3 + z1z2z3z4",
    "appA-h2": "z1 + z1z2 + z2z3 + z3z4 + z1z2z3z4",
    "appA-h3": "z1 + z1z2 + z3 + z3z4",
    "appA-h4": "z1 + z2 + z3 + z1z2z3",
    "appA-h4tilde": "z1 + 0.99z2 + 1.01z3 + z1z2z3",
}

PRESETS: dict[str, Preset] = {
    "fig1": Preset("fig1", "fig1-compare", FIG1_TARGET, "shifted-sigmoid(shift=0.5)", _FIG1_HP,
                   seeds=(0, 1, 2, 3, 4)),
    "fig4-leap2": Preset("fig4-leap2", "symmetry-escape", "z1 + z1z2z3 + z1z2z3z4", "shifted-sigmoid(shift=0.5)",
                         replace(_FIG1_HP, horizon=200.0, record_interval=2.0)),
    "fig4-leap3": Preset("fig4-leap3", "symmetry-escape", "z1 + z1z2z3z4", "shifted-sigmoid(shift=0.5)",
                         replace(_FIG1_HP, horizon=3000.0, record_interval=10.0)),
}
for _name, _target in _APPA_TARGETS.items():
    PRESETS[_name] = Preset(_name, "dfpde", _target, "shifted-sigmoid(shift=1.0)",
                            _APPA_HP, options={"symmetry": "project"})


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
