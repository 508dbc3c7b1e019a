"""Service configuration: flat key-value sections, every key overridable via
SCAMBAIT_<SECTION>_<KEY> environment variables. Auth tokens never live in the
file; only the *name* of the environment variable that holds them does.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from ..engagement import DelayDistribution, DelayPolicy, EngineConfig, ObservationWindow
from ..reply_engine import GuardPolicy


class ConfigError(ValueError):
    pass


_SECTIONS = ("window", "delay", "guard", "generator", "mailbox", "service", "simulation")

_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}


def parse_duration(text: str) -> timedelta:
    """Durations like '15m', '4h', '17d', '2.5d' or bare seconds '900'."""
    text = text.strip()
    if not text:
        raise ConfigError("empty duration")
    unit = 1
    if text[-1].lower() in _UNITS:
        unit = _UNITS[text[-1].lower()]
        text = text[:-1]
    try:
        seconds = float(text) * unit
    except ValueError as exc:
        raise ConfigError(f"bad duration: {text!r}") from exc
    if seconds <= 0:
        raise ConfigError("durations must be positive")
    return timedelta(seconds=round(seconds))


def parse_datetime(text: str) -> datetime:
    try:
        stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise ConfigError(f"bad datetime: {text!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean: {text!r}")


@dataclass
class GeneratorConfig:
    kind: str = "template"  # template | http
    endpoint_url: str = ""
    model: str = ""
    auth_env_var: str = ""
    timeout: float = 60.0
    seed: int = 0


@dataclass
class MailboxConfig:
    kind: str = "file"  # file | net
    path: str = ""
    format: str = "maildir"  # maildir | mbox
    outbox: str = ""
    imap_host: str = ""
    imap_port: int = 993
    imap_username: str = ""
    imap_password_env: str = ""
    smtp_host: str = ""
    smtp_port: int = 587
    folder: str = "INBOX"


@dataclass
class SimulationConfig:
    scenario: str = "reference"
    seed: int = 0
    # Compact persona lines for scenario=custom, e.g.
    #   persona_1 = kind=oneshot; at=2022-11-12T00:00:00Z; fails=true
    persona_lines: tuple[str, ...] = ()


@dataclass
class ServiceConfig:
    window: ObservationWindow
    data_dir: Path
    delay: DelayPolicy
    guard: GuardPolicy
    generator: GeneratorConfig
    mailbox: MailboxConfig
    simulation: SimulationConfig
    approval_required: bool = False
    silence_timeout: timedelta = timedelta(days=30)
    signature: str = "-- \nM. Rossi"
    our_address: str = "m.rossi@bait.invalid"
    api_host: str = "127.0.0.1"
    api_port: int = 8822
    poll_interval: float = 5.0
    seed: int = 0
    send_rate_limit_per_day: int = 10
    denylist_path: Path | None = None
    refusal_patterns_path: Path | None = None
    frontend_dir: Path | None = None

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            window=self.window,
            delay=self.delay,
            approval_required=self.approval_required,
            silence_timeout=self.silence_timeout,
            seed=self.seed,
        )


def _apply_env_overrides(parser: configparser.ConfigParser) -> None:
    for name, value in os.environ.items():
        if not name.startswith("SCAMBAIT_"):
            continue
        rest = name[len("SCAMBAIT_"):].lower()
        for section in _SECTIONS:
            prefix = section + "_"
            if rest.startswith(prefix):
                key = rest[len(prefix):]
                if not parser.has_section(section):
                    parser.add_section(section)
                parser.set(section, key, value)
                break


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    _apply_env_overrides(parser)

    def get(section: str, key: str, default: str | None = None) -> str | None:
        if parser.has_option(section, key):
            return parser.get(section, key)
        return default

    # [window] is mandatory: the engine refuses to run without its interval.
    try:
        window = ObservationWindow(
            collection_start=parse_datetime(_require(get("window", "collection_start"), "window.collection_start")),
            collection_end=parse_datetime(_require(get("window", "collection_end"), "window.collection_end")),
            experiment_end=parse_datetime(_require(get("window", "experiment_end"), "window.experiment_end")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    dist_name = (get("delay", "distribution", "loguniform") or "").strip().lower()
    if dist_name in ("loguniform", "log_uniform", "log-uniform"):
        distribution = DelayDistribution.LOG_UNIFORM
    elif dist_name == "fixed":
        distribution = DelayDistribution.FIXED
    else:
        raise ConfigError(f"unknown delay distribution {dist_name!r}")
    override_raw = get("delay", "first_reply_override")
    try:
        delay = DelayPolicy(
            min_delay=parse_duration(get("delay", "min", "15m")),
            max_delay=parse_duration(get("delay", "max", "21d")),
            distribution=distribution,
            first_reply_override=parse_duration(override_raw) if override_raw else None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        guard = GuardPolicy(
            max_attempts=int(get("guard", "max_attempts", "3")),
            include_history=_parse_bool(get("guard", "include_history", "false")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    generator = GeneratorConfig(
        kind=(get("generator", "kind", "template") or "template").lower(),
        endpoint_url=get("generator", "endpoint_url", "") or "",
        model=get("generator", "model", "") or "",
        auth_env_var=get("generator", "auth_env_var", "") or "",
        timeout=float(get("generator", "timeout", "60")),
        seed=int(get("generator", "seed", "0")),
    )
    if generator.kind not in ("template", "http"):
        raise ConfigError(f"unknown generator kind {generator.kind!r}")
    if generator.kind == "http" and not generator.endpoint_url:
        raise ConfigError("http generator requires generator.endpoint_url")

    mailbox = MailboxConfig(
        kind=(get("mailbox", "kind", "file") or "file").lower(),
        path=get("mailbox", "path", "") or "",
        format=(get("mailbox", "format", "maildir") or "maildir").lower(),
        outbox=get("mailbox", "outbox", "") or "",
        imap_host=get("mailbox", "imap_host", "") or "",
        imap_port=int(get("mailbox", "imap_port", "993")),
        imap_username=get("mailbox", "imap_username", "") or "",
        imap_password_env=get("mailbox", "imap_password_env", "") or "",
        smtp_host=get("mailbox", "smtp_host", "") or "",
        smtp_port=int(get("mailbox", "smtp_port", "587")),
        folder=get("mailbox", "folder", "INBOX") or "INBOX",
    )
    if mailbox.kind not in ("file", "net", "none"):
        raise ConfigError(f"unknown mailbox kind {mailbox.kind!r}")

    persona_lines = []
    if parser.has_section("simulation"):
        for key in sorted(parser.options("simulation")):
            if key.startswith("persona_"):
                persona_lines.append(parser.get("simulation", key))
    simulation = SimulationConfig(
        scenario=get("simulation", "scenario", "reference") or "reference",
        seed=int(get("simulation", "seed", get("service", "seed", "0") or "0")),
        persona_lines=tuple(persona_lines),
    )

    data_dir = Path(_require(get("service", "data_dir"), "service.data_dir"))

    def _optional_path(key: str) -> Path | None:
        raw = get("service", key)
        if not raw:
            return None
        p = Path(raw)
        if not p.exists():
            raise ConfigError(f"service.{key} does not exist: {p}")
        return p

    config = ServiceConfig(
        window=window,
        data_dir=data_dir,
        delay=delay,
        guard=guard,
        generator=generator,
        mailbox=mailbox,
        simulation=simulation,
        approval_required=_parse_bool(get("service", "approval_required", "false")),
        silence_timeout=parse_duration(get("service", "silence_timeout", "30d")),
        signature=(get("service", "signature", "-- \\nM. Rossi") or "").replace("\\n", "\n"),
        our_address=get("service", "our_address", "m.rossi@bait.invalid") or "",
        api_host=get("service", "api_host", "127.0.0.1") or "127.0.0.1",
        api_port=int(get("service", "api_port", "8822")),
        poll_interval=float(get("service", "poll_interval", "5")),
        seed=int(get("service", "seed", "0")),
        send_rate_limit_per_day=int(get("service", "send_rate_limit_per_day", "10")),
        denylist_path=_optional_path("denylist_path"),
        refusal_patterns_path=_optional_path("refusal_patterns_path"),
        frontend_dir=_optional_path("frontend_dir"),
    )

    if mailbox.kind == "file":
        if mailbox.path and not Path(mailbox.path).exists():
            raise ConfigError(f"mailbox.path does not exist: {mailbox.path}")
    return config


def _require(value: str | None, name: str) -> str:
    if value is None or not value.strip():
        raise ConfigError(f"missing required config key {name}")
    return value


# -- engine profile persisted alongside the event logs -------------------------
#
# Replay recomputes randomized delays from (seed, thread, seq), so the exact
# engine parameters used while writing the logs must travel with the data dir.


def _delay_to_dict(delay: DelayPolicy) -> dict:
    return {
        "min_s": delay.min_delay.total_seconds(),
        "max_s": delay.max_delay.total_seconds(),
        "distribution": delay.distribution.value,
        "first_reply_override_s": (
            delay.first_reply_override.total_seconds() if delay.first_reply_override else None
        ),
    }


def _delay_from_dict(data: dict) -> DelayPolicy:
    return DelayPolicy(
        min_delay=timedelta(seconds=data["min_s"]),
        max_delay=timedelta(seconds=data["max_s"]),
        distribution=DelayDistribution(data["distribution"]),
        first_reply_override=(
            timedelta(seconds=data["first_reply_override_s"])
            if data.get("first_reply_override_s")
            else None
        ),
    )


def _engine_to_dict(config: EngineConfig) -> dict:
    return {
        "window": {
            "collection_start": config.window.collection_start.isoformat(),
            "collection_end": config.window.collection_end.isoformat(),
            "experiment_end": config.window.experiment_end.isoformat(),
        },
        "delay": _delay_to_dict(config.delay),
        "approval_required": config.approval_required,
        "silence_timeout_s": config.silence_timeout.total_seconds(),
        "retry_backoff_base_s": config.retry_backoff_base.total_seconds(),
        "retry_max_attempts": config.retry_max_attempts,
        "seed": config.seed,
    }


def _engine_from_dict(data: dict) -> EngineConfig:
    w = data["window"]
    return EngineConfig(
        window=ObservationWindow(
            collection_start=datetime.fromisoformat(w["collection_start"]),
            collection_end=datetime.fromisoformat(w["collection_end"]),
            experiment_end=datetime.fromisoformat(w["experiment_end"]),
        ),
        delay=_delay_from_dict(data["delay"]),
        approval_required=data["approval_required"],
        silence_timeout=timedelta(seconds=data["silence_timeout_s"]),
        retry_backoff_base=timedelta(seconds=data["retry_backoff_base_s"]),
        retry_max_attempts=data["retry_max_attempts"],
        seed=data["seed"],
    )


def save_engine_profile(
    data_dir: str | Path,
    default: EngineConfig,
    overrides: dict[str, EngineConfig] | None = None,
) -> None:
    payload = {
        "default": _engine_to_dict(default),
        "overrides": {key: _engine_to_dict(cfg) for key, cfg in (overrides or {}).items()},
    }
    path = Path(data_dir) / "engine.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def load_engine_profile(data_dir: str | Path) -> tuple[EngineConfig, dict[str, EngineConfig]]:
    path = Path(data_dir) / "engine.json"
    if not path.exists():
        raise ConfigError(f"no engine profile found at {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    default = _engine_from_dict(data["default"])
    overrides = {key: _engine_from_dict(cfg) for key, cfg in data.get("overrides", {}).items()}
    return default, overrides
