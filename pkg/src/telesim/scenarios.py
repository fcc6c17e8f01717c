"""Access to the scenario files shipped with the package."""

from __future__ import annotations

from importlib import resources

from .scenario import ScenarioConfig

# Attack scenarios whose reports must visibly differ from baseline.
ATTACK_SCENARIOS = (
    "reorder",
    "drop_perpacket",
    "drop_group",
    "delay_constant_300",
    "delay_constant_500",
    "delay_uniform_100_500",
    "delay_uniform_400_600",
    "delay_uniform_300_700",
    "delay_gauss_0_200",
    "delay_gauss_100",
    "delay_gauss_100_250",
    "modify_invert_grasp",
    "modify_negate_pos",
    "modify_negate_rot",
    "modify_swap_arms",
    "modify_scale_pos",
    "feedback_spoof",
    "hijack",
    "force_reset",
)

DELAY_SCENARIOS = tuple(n for n in ATTACK_SCENARIOS if n.startswith("delay_"))

DEFENDED_SCENARIOS = (
    "modify_invert_grasp_defended",
    "hijack_defended",
    "force_reset_defended",
)


def _root():
    return resources.files("telesim") / "scenarios"


def list_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in _root().iterdir() if p.name.endswith(".yaml"))


def scenario_text(name: str) -> str:
    path = _root() / f"{name}.yaml"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return path.read_text(encoding="utf-8")


def load_scenario(name: str) -> ScenarioConfig:
    return ScenarioConfig.from_yaml(scenario_text(name))
