"""Build simulation configs from the [simulation] config section.

scenario = reference   uses the bundled eleven-persona scenario.
scenario = custom      assembles personas from compact persona_N lines:

    persona_1 = kind=oneshot; at=2022-11-12T00:00:00Z; fails=true
    persona_2 = kind=extorter; at=2022-11-14T00:00:00Z; exchanges=5; latency=10h; delay=2d; first_reply=17d
    persona_3 = kind=burstpause; at=2022-11-16T00:00:00Z; burst=2; pauses=9d,14d; latency=5h; delay=1d
    persona_4 = kind=longletter; at=2022-11-18T00:00:00Z; chars=4572; sentences=48; gives_up=1

Unknown keys are rejected so typos fail loudly at startup.
"""

from __future__ import annotations

from datetime import timedelta

from ..engagement import DelayDistribution, DelayPolicy
from ..simulator import (
    BurstPause,
    LongLetter,
    OneShotDropper,
    PersistentExtorter,
    ScenarioEntry,
    SimConfig,
    reference_scenario,
)
from .config import ConfigError, ServiceConfig, parse_datetime, parse_duration


def _parse_pairs(line: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for chunk in line.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ConfigError(f"persona field {chunk!r} is not key=value")
        key, value = chunk.split("=", 1)
        pairs[key.strip().lower()] = value.strip()
    return pairs


def _bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def _fixed_delay(pairs: dict[str, str]) -> DelayPolicy | None:
    if "delay" not in pairs and "first_reply" not in pairs:
        return None
    base = parse_duration(pairs.get("delay", "1d"))
    override = parse_duration(pairs["first_reply"]) if "first_reply" in pairs else None
    return DelayPolicy(base, base, DelayDistribution.FIXED, first_reply_override=override)


_COMMON_KEYS = {"kind", "at", "address", "delay", "first_reply"}
_KIND_KEYS = {
    "oneshot": {"fails"},
    "extorter": {"exchanges", "latency", "patience"},
    "burstpause": {"burst", "pauses", "latency"},
    "longletter": {"chars", "sentences", "gives_up", "latency"},
}


def parse_persona_line(line: str, index: int) -> ScenarioEntry:
    pairs = _parse_pairs(line)
    kind = pairs.get("kind", "").lower()
    if kind not in _KIND_KEYS:
        raise ConfigError(f"persona {index}: unknown kind {pairs.get('kind')!r}")
    unknown = set(pairs) - _COMMON_KEYS - _KIND_KEYS[kind]
    if unknown:
        raise ConfigError(f"persona {index}: unknown fields {sorted(unknown)}")
    if "at" not in pairs:
        raise ConfigError(f"persona {index}: missing first-contact time (at=...)")

    try:
        if kind == "oneshot":
            persona = OneShotDropper(delivery_fails=_bool(pairs.get("fails", "false")))
        elif kind == "extorter":
            persona = PersistentExtorter(
                exchanges_before_payment_ask=int(pairs.get("exchanges", "5")),
                reply_latency=parse_duration(pairs.get("latency", "8h")),
                patience=parse_duration(pairs["patience"]) if "patience" in pairs else None,
            )
        elif kind == "burstpause":
            persona = BurstPause(
                burst_len=int(pairs.get("burst", "2")),
                pause_durations=tuple(
                    parse_duration(p) for p in pairs.get("pauses", "9d,14d").split(",")
                ),
                reply_latency=parse_duration(pairs.get("latency", "5h")),
            )
        else:
            persona = LongLetter(
                msg_chars=int(pairs.get("chars", "1000")),
                gives_up_after=int(pairs.get("gives_up", "1")),
                msg_sentences=int(pairs["sentences"]) if "sentences" in pairs else None,
                reply_latency=parse_duration(pairs.get("latency", "1d")),
            )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"persona {index}: {exc}") from exc

    return ScenarioEntry(
        persona=persona,
        first_contact_at=parse_datetime(pairs["at"]),
        address=pairs.get("address", f"scammer{index:02d}@sim.invalid"),
        delay=_fixed_delay(pairs),
    )


def build_sim_config(config: ServiceConfig) -> SimConfig:
    sim = config.simulation
    if sim.scenario == "reference":
        return reference_scenario(seed=sim.seed)
    if sim.scenario == "custom":
        if not sim.persona_lines:
            raise ConfigError("scenario=custom needs at least one persona_N line")
        entries = tuple(
            parse_persona_line(line, i + 1) for i, line in enumerate(sim.persona_lines)
        )
        try:
            return SimConfig(
                entries=entries,
                window=config.window,
                seed=sim.seed,
                delay=config.delay,
                guard=config.guard,
                silence_timeout=config.silence_timeout,
                our_address=config.our_address,
                signature=config.signature,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown scenario {sim.scenario!r} (expected reference or custom)")
