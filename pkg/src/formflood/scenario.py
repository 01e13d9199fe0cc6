"""Scenario files: one attack plus optional defense and prevention settings.

JSON with strict key checking.  The bundled presets live in
``formflood/data/scenarios`` and are regenerated by :func:`write_presets`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .attack_sim import DAY, AttackConfig, ConfigError, calibrated_mix, sms_preset
from .defense import CleanerPolicy, LegitTraffic

SCENARIO_KEYS = ("name", "label", "attack", "defense_policy", "legit_traffic", "prevention_enabled", "outputs")
ATTACK_SIZES = (514, 1026, 2050, 3911)
STANDARD_HORIZON = 30 * DAY
DEFEND_HORIZON = 3 * DAY


@dataclass(frozen=True)
class Scenario:
    name: str
    attack: AttackConfig
    defense_policy: CleanerPolicy | None = None
    legit_traffic: LegitTraffic | None = None
    prevention_enabled: bool = False
    outputs: str = "out"
    label: str = ""

    def __post_init__(self):
        if not self.name:
            raise ConfigError("scenario name must be non-empty")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "label": self.label,
            "attack": self.attack.to_dict(),
            "defense_policy": self.defense_policy.to_dict() if self.defense_policy else None,
            "legit_traffic": self.legit_traffic.to_dict() if self.legit_traffic else None,
            "prevention_enabled": self.prevention_enabled,
            "outputs": self.outputs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigError("scenario: expected a JSON object")
        unknown = sorted(set(d) - set(SCENARIO_KEYS))
        if unknown:
            raise ConfigError(f"scenario: unknown keys {unknown}")
        for key in ("name", "attack"):
            if key not in d:
                raise ConfigError(f"scenario: missing required key {key!r}")
        if not isinstance(d["name"], str):
            raise ConfigError("scenario.name: expected a string")
        if not isinstance(d.get("prevention_enabled", False), bool):
            raise ConfigError("scenario.prevention_enabled: expected true or false")
        try:
            policy = CleanerPolicy.from_dict(d["defense_policy"]) if d.get("defense_policy") else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario.defense_policy: {exc}") from None
        try:
            legit = LegitTraffic.from_dict(d["legit_traffic"]) if d.get("legit_traffic") else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario.legit_traffic: {exc}") from None
        return cls(
            name=d["name"],
            attack=AttackConfig.from_dict(d["attack"]),
            defense_policy=policy,
            legit_traffic=legit,
            prevention_enabled=d.get("prevention_enabled", False),
            outputs=str(d.get("outputs", "out")),
            label=str(d.get("label", "")),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario: invalid JSON ({exc})") from None
        return cls.from_dict(d)


def load_scenario(path) -> Scenario:
    return Scenario.from_json(Path(path).read_text())


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(scenario.to_json())


# -- presets -----------------------------------------------------------------


def standard_attack(num_forms: int, seed: int = 0) -> AttackConfig:
    return AttackConfig(num_forms=num_forms, behavior_mix=calibrated_mix(), horizon=STANDARD_HORIZON, seed=seed)


def _persona(persona: str, label: str = "") -> Scenario:
    attack = standard_attack(1026).replace(horizon=DEFEND_HORIZON)
    if persona == "store":
        legit = LegitTraffic(collector_domain="auction.example", collector_fraction=0.3)
        policy = CleanerPolicy("store", collectors=(legit.collector_rule(),))
    elif persona == "politician":
        legit = LegitTraffic(contacts=200, rate_per_day=120.0, stranger_fraction=0.0)
        policy = CleanerPolicy("politician", constituent_isps=tuple(f"mail{i}.example" for i in range(7)),
                               home_country="us")
    else:
        legit = LegitTraffic()
        policy = CleanerPolicy("individual")
    name = label or f"persona-{persona}"
    return Scenario(name, attack, policy, legit, prevention_enabled=False, outputs=f"out/{name}", label=label)


def presets() -> dict[str, Scenario]:
    out = {}
    for F in ATTACK_SIZES:
        name = f"paper-F{F}"
        out[name] = Scenario(name, standard_attack(F), outputs=f"out/{name}")
    out["calibrated"] = Scenario("calibrated", standard_attack(1026), outputs="out/calibrated")
    out["sms-device"] = Scenario("sms-device", sms_preset(200), outputs="out/sms-device")
    for persona in ("individual", "store", "politician"):
        s = _persona(persona)
        out[s.name] = s
    election = _persona("politician", label="election")
    out["election"] = Scenario("election", standard_attack(3911).replace(horizon=DEFEND_HORIZON),
                               election.defense_policy, election.legit_traffic,
                               prevention_enabled=True, outputs="out/election", label="election")
    return out


def write_presets(directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, s in presets().items():
        p = d / f"{name}.json"
        save_scenario(s, p)
        paths.append(p)
    return paths


def bundled_scenario(name: str) -> Path:
    """Path of a bundled preset file."""
    path = Path(str(resources.files("formflood") / "data" / "scenarios" / f"{name}.json"))
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return path


def resolve_scenario(ref: str) -> Path:
    """A scenario file path, or the name of a bundled preset."""
    p = Path(ref)
    return p if p.exists() else bundled_scenario(ref)

