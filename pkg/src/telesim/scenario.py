"""Scenario configuration: schema, validation, YAML load/dump.

A scenario file is a structured key-value document selecting the channel
transport, attacker role and attack parameters, defense toggles (with a
hex-encoded session key), robot safety limits, the task script, the seed,
and the simulated time budget. Two equal configs with equal seeds produce
byte-identical run reports.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from . import attacks as atk
from . import defense as dfs
from .robot import SafetyLimits
from .task import TaskScript, Transfer


class ConfigInvalid(ValueError):
    """Scenario failed schema or invariant checks."""


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 1
    time_budget_s: float = 600.0
    run_to_budget: bool = False
    channel: atk.ChannelConfig = field(default_factory=atk.ChannelConfig)
    defense: dfs.DefenseConfig = field(default_factory=dfs.DefenseConfig)
    limits: SafetyLimits = field(default_factory=SafetyLimits)
    script: TaskScript = field(default_factory=TaskScript)

    def validate(self) -> None:
        try:
            if not 0 <= self.seed < 2**64:
                raise ValueError("seed must be an unsigned 64-bit integer")
            if self.time_budget_s <= 0:
                raise ValueError("time budget must be positive")
            self.limits.validate()
            self.channel.validate()
            self.defense.validate(self.limits)
            self.script.validate(self.limits)
        except (ValueError, atk.ConfigError) as exc:
            raise ConfigInvalid(str(exc)) from exc

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "time_budget_s": self.time_budget_s,
            "run_to_budget": self.run_to_budget,
            "channel": _channel_to_dict(self.channel),
            "defense": _defense_to_dict(self.defense),
            "limits": dataclasses.asdict(self.limits) | {
                "workspace_min_um": list(self.limits.workspace_min_um),
                "workspace_max_um": list(self.limits.workspace_max_um),
            },
            "script": {
                "transfers": [{"source": t.source, "dest": t.dest, "arm": t.arm}
                              for t in self.script.transfers],
                "capture_radius_um": self.script.capture_radius_um,
                "lift_height_um": self.script.lift_height_um,
                "nominal_step_um": self.script.nominal_step_um,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigInvalid("scenario document must be a mapping")
        try:
            cfg = cls(
                name=str(raw.get("name", "scenario")),
                seed=int(raw.get("seed", 1)),
                time_budget_s=float(raw.get("time_budget_s", 600.0)),
                run_to_budget=bool(raw.get("run_to_budget", False)),
                channel=_channel_from_dict(raw.get("channel") or {}),
                defense=_defense_from_dict(raw.get("defense") or {}),
                limits=_limits_from_dict(raw.get("limits") or {}),
                script=_script_from_dict(raw.get("script") or {}),
            )
        except ConfigInvalid:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigInvalid(f"bad scenario document: {exc}") from exc
        cfg.validate()
        return cfg

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ScenarioConfig":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"unparseable scenario file: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_yaml(fh.read())


# -- channel ----------------------------------------------------------------

_DELAY_MODELS = ("constant", "uniform", "gaussian")


def _attack_to_dict(a: atk.AttackSpec | None) -> dict | None:
    if a is None:
        return None
    if isinstance(a, atk.Reorder):
        return {"kind": "reorder", "queue_len": a.queue_len}
    if isinstance(a, atk.Drop):
        return {"kind": "drop", "eta": a.eta, "mode": a.mode, "group_size": a.group_size}
    if isinstance(a, atk.Delay):
        m = a.model
        if isinstance(m, atk.ConstantDelay):
            return {"kind": "delay", "model": "constant", "delay_s": m.delay_s}
        if isinstance(m, atk.UniformDelay):
            return {"kind": "delay", "model": "uniform", "lo_s": m.lo_s, "hi_s": m.hi_s}
        return {"kind": "delay", "model": "gaussian", "mean_s": m.mean_s,
                "std_s": m.std_s, "lo_s": m.lo_s, "hi_s": m.hi_s}
    if isinstance(a, atk.Modify):
        muts = []
        for m in a.mutations:
            if isinstance(m, atk.ScalePos):
                muts.append({"kind": "scale_pos", "factor": m.factor, "lo": m.lo, "hi": m.hi})
            else:
                muts.append(type(m).__name__.lower().replace("negatepos", "negate_pos")
                            .replace("negaterot", "negate_rot")
                            .replace("invertgrasp", "invert_grasp")
                            .replace("swaparms", "swap_arms"))
        return {"kind": "modify", "mutations": muts}
    if isinstance(a, atk.Hijack):
        return {"kind": "hijack", "offset": a.offset, "dpos_um": list(a.dpos_um),
                "single_shot": a.single_shot}
    if isinstance(a, atk.ForceReset):
        return {"kind": "force_reset", "period_s": a.period_s, "delta_um": a.delta_um}
    if isinstance(a, atk.FeedbackSpoof):
        return {"kind": "feedback_spoof", "pos_offset_um": list(a.pos_offset_um),
                "mask_status": a.mask_status}
    raise ConfigInvalid(f"unknown attack spec {a!r}")


def _mutation_from_entry(entry) -> atk.Mutation:
    if isinstance(entry, str):
        table = {"negate_pos": atk.NegatePos, "negate_rot": atk.NegateRot,
                 "invert_grasp": atk.InvertGrasp, "swap_arms": atk.SwapArms}
        if entry not in table:
            raise ConfigInvalid(f"unknown mutation {entry!r}")
        return table[entry]()
    if isinstance(entry, dict):
        kind = entry.get("kind")
        if kind == "scale_pos":
            factor = entry.get("factor")
            return atk.ScalePos(factor=None if factor is None else float(factor),
                                lo=float(entry.get("lo", 0.5)),
                                hi=float(entry.get("hi", 2.0)))
        raise ConfigInvalid(f"unknown mutation {entry!r}")
    raise ConfigInvalid(f"bad mutation entry {entry!r}")


def _attack_from_dict(raw: dict | None) -> atk.AttackSpec | None:
    if raw is None:
        return None
    kind = raw.get("kind")
    if kind == "reorder":
        return atk.Reorder(queue_len=int(raw.get("queue_len", 32)))
    if kind == "drop":
        return atk.Drop(eta=float(raw["eta"]), mode=raw.get("mode", atk.PER_PACKET),
                        group_size=int(raw.get("group_size", 100)))
    if kind == "delay":
        model = raw.get("model", "constant")
        if model == "constant":
            return atk.Delay(atk.ConstantDelay(float(raw["delay_s"])))
        if model == "uniform":
            return atk.Delay(atk.UniformDelay(float(raw["lo_s"]), float(raw["hi_s"])))
        if model == "gaussian":
            if "mean_s" in raw:
                hi = raw.get("hi_s")
                return atk.Delay(atk.GaussianDelay(
                    mean_s=float(raw["mean_s"]), std_s=float(raw["std_s"]),
                    lo_s=float(raw.get("lo_s", 0.0)),
                    hi_s=None if hi is None else float(hi)))
            return atk.Delay(atk.GaussianDelay.from_range(float(raw["lo_s"]),
                                                          float(raw["hi_s"])))
        raise ConfigInvalid(f"unknown delay model {model!r}")
    if kind == "modify":
        return atk.Modify(tuple(_mutation_from_entry(e) for e in raw.get("mutations", [])))
    if kind == "hijack":
        off = raw.get("offset")
        dpos = raw.get("dpos_um", (0, 0, 0))
        return atk.Hijack(offset=None if off is None else int(off),
                          dpos_um=tuple(int(v) for v in dpos),
                          single_shot=bool(raw.get("single_shot", False)))
    if kind == "force_reset":
        return atk.ForceReset(period_s=float(raw.get("period_s", 0.5)),
                              delta_um=int(raw.get("delta_um", 50_000)))
    if kind == "feedback_spoof":
        return atk.FeedbackSpoof(
            pos_offset_um=tuple(int(v) for v in raw.get("pos_offset_um", (0, 0, 0))),
            mask_status=bool(raw.get("mask_status", False)))
    raise ConfigInvalid(f"unknown attack kind {kind!r}")


def _channel_to_dict(ch: atk.ChannelConfig) -> dict:
    return {
        "transport": ch.transport,
        "attacker_role": ch.attacker_role,
        "attack": _attack_to_dict(ch.attack),
        "window": {"start_s": ch.window_start_s, "stop_s": ch.window_stop_s},
        "udp": {"host": ch.host, "operator_port": ch.operator_port,
                "attacker_cmd_port": ch.attacker_cmd_port,
                "attacker_fb_port": ch.attacker_fb_port,
                "robot_port": ch.robot_port},
    }


def _channel_from_dict(raw: dict) -> atk.ChannelConfig:
    window = raw.get("window") or {}
    udp = raw.get("udp") or {}
    stop = window.get("stop_s")
    return atk.ChannelConfig(
        transport=raw.get("transport", "mem"),
        attacker_role=raw.get("attacker_role", atk.ROLE_NONE),
        attack=_attack_from_dict(raw.get("attack")),
        window_start_s=float(window.get("start_s", 0.0)),
        window_stop_s=None if stop is None else float(stop),
        host=udp.get("host", "127.0.0.1"),
        operator_port=int(udp.get("operator_port", 47801)),
        attacker_cmd_port=int(udp.get("attacker_cmd_port", 47802)),
        attacker_fb_port=int(udp.get("attacker_fb_port", 47803)),
        robot_port=int(udp.get("robot_port", 47804)),
    )


# -- defense ------------------------------------------------------------------

def _defense_to_dict(d: dfs.DefenseConfig) -> dict:
    return {
        "auth_mode": d.auth_mode,
        "key_hex": d.key.hex(),
        "key_bits": d.key_bits,
        "seq_window": d.seq_window,
        "rate_limit": d.rate_limit,
        "harden_sequence": d.harden_sequence,
        "rate_limiting": d.rate_limiting,
        "monitoring": d.monitoring,
        "monitor": {"ooo_threshold": d.monitor.ooo_threshold,
                    "chain_min": d.monitor.chain_min},
    }


def _defense_from_dict(raw: dict) -> dfs.DefenseConfig:
    mon = raw.get("monitor") or {}
    key_hex = raw.get("key_hex", "00" * 32)
    try:
        key = bytes.fromhex(key_hex)
    except ValueError as exc:
        raise ConfigInvalid(f"key_hex is not valid hex: {exc}") from exc
    return dfs.DefenseConfig(
        auth_mode=raw.get("auth_mode", dfs.AUTH_NONE),
        key=key,
        key_bits=int(raw.get("key_bits", 256)),
        seq_window=int(raw.get("seq_window", 1000)),
        rate_limit=float(raw.get("rate_limit", 1100.0)),
        harden_sequence=bool(raw.get("harden_sequence", False)),
        rate_limiting=bool(raw.get("rate_limiting", False)),
        monitoring=bool(raw.get("monitoring", False)),
        monitor=dfs.MonitorConfig(ooo_threshold=int(mon.get("ooo_threshold", 50)),
                                  chain_min=int(mon.get("chain_min", 10))),
    )


# -- limits / script ----------------------------------------------------------

def _limits_from_dict(raw: dict) -> SafetyLimits:
    def vec(name, default):
        v = raw.get(name, default)
        return (int(v[0]), int(v[1]), int(v[2]))

    return SafetyLimits(
        workspace_min_um=vec("workspace_min_um", (-100_000, -100_000, -100_000)),
        workspace_max_um=vec("workspace_max_um", (100_000, 100_000, 100_000)),
        delta_clip_um=int(raw.get("delta_clip_um", 500)),
        delta_estop_um=int(raw.get("delta_estop_um", 5_000)),
        rot_clip_urad=int(raw.get("rot_clip_urad", 5_000)),
        rot_estop_urad=int(raw.get("rot_estop_urad", 50_000)),
        gap_limit=int(raw.get("gap_limit", 1_000)),
        tick_rate=int(raw.get("tick_rate", 1_000)),
        reset_latency_s=float(raw.get("reset_latency_s", 2.0)),
    )


def _script_from_dict(raw: dict) -> TaskScript:
    transfers = raw.get("transfers")
    if transfers is None:
        parsed = TaskScript().transfers
    else:
        parsed = tuple(
            Transfer(int(t["source"]), int(t["dest"]), int(t["arm"]))
            if isinstance(t, dict) else Transfer(int(t[0]), int(t[1]), int(t[2]))
            for t in transfers
        )
    return TaskScript(
        transfers=parsed,
        capture_radius_um=int(raw.get("capture_radius_um", 3_000)),
        lift_height_um=int(raw.get("lift_height_um", 20_000)),
        nominal_step_um=int(raw.get("nominal_step_um", 200)),
    )
