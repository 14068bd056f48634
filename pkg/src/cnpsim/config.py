"""Run configuration: defaults, validation and the key=value text form.

The same ``key=value`` syntax serves the optional config file (one pair per
line, ``#`` comments) and the header line echoed at the top of every trace,
so a trace header can be fed back in to reproduce its run.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .agents import ProgressPolicy
from .messaging import DIALECTS, get_dialect
from .protocol import ProtocolVariant

__all__ = ["RunConfig", "ConfigError", "read_config_file", "parse_settings"]


class ConfigError(ValueError):
    pass


MIN_BID_WINDOW = 5


@dataclass(frozen=True)
class RunConfig:
    variant: ProtocolVariant = ProtocolVariant.UPDATED
    dialect: str = "acl-f"
    tasks: int = 5
    changes: int = 2
    contractors: int = 4
    width: int = 10
    height: int = 10
    seed: int = 42
    latency_base: int = 1
    latency_jitter: int = 0
    retry_budget: int = 2
    report_interval: int = 5
    progress_policy: ProgressPolicy = ProgressPolicy.RESET
    # None picks a window long enough for a CFP/proposal round trip
    bid_window: Optional[int] = None
    work_rate: float = 0.2
    prey_period: int = 2
    max_ticks: int = 10_000

    def validate(self) -> "RunConfig":
        counts = {
            "tasks": self.tasks,
            "changes": self.changes,
            "contractors": self.contractors,
            "seed": self.seed,
            "latency base": self.latency_base,
            "latency jitter": self.latency_jitter,
            "retry_budget": self.retry_budget,
        }
        for name, value in counts.items():
            if value < 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")
        if self.changes > self.tasks:
            raise ConfigError(
                f"changes ({self.changes}) cannot exceed tasks ({self.tasks})"
            )
        for name in ("width", "height", "report_interval", "prey_period", "max_ticks"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.bid_window is not None and self.bid_window < 1:
            raise ConfigError("bid_window must be >= 1")
        if not 0 < self.work_rate <= 1:
            raise ConfigError(f"work_rate must lie in (0, 1], got {self.work_rate}")
        if self.dialect not in DIALECTS:
            raise ConfigError(f"unknown dialect {self.dialect!r}")
        if self.tasks + self.contractors > self.width * self.height:
            raise ConfigError("grid too small for the requested population")
        return self

    # text form ------------------------------------------------------------

    def settings(self) -> list[tuple[str, str]]:
        """Ordered ``(key, value)`` pairs; the inverse of :meth:`from_settings`."""
        return [
            ("variant", self.variant.value),
            ("dialect", self.dialect),
            ("tasks", str(self.tasks)),
            ("changes", str(self.changes)),
            ("contractors", str(self.contractors)),
            ("grid", f"{self.width}x{self.height}"),
            ("seed", str(self.seed)),
            ("latency", f"{self.latency_base}:{self.latency_jitter}"),
            ("retry_budget", str(self.retry_budget)),
            ("report_interval", str(self.report_interval)),
            ("progress_policy", self.progress_policy.value),
            ("bid_window", "auto" if self.bid_window is None else str(self.bid_window)),
            ("work_rate", repr(self.work_rate)),
            ("prey_period", str(self.prey_period)),
            ("max_ticks", str(self.max_ticks)),
        ]

    @classmethod
    def from_settings(
        cls, settings: Mapping[str, Any], base: Optional["RunConfig"] = None
    ) -> "RunConfig":
        base = base or cls()
        try:
            updates = parse_settings(settings)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return dataclasses.replace(base, **updates).validate()

    @property
    def effective_bid_window(self) -> int:
        if self.bid_window is not None:
            return self.bid_window
        return max(MIN_BID_WINDOW, 2 * (self.latency_base + self.latency_jitter) + 1)

    def scenario_hash(self) -> str:
        """Digest of everything that shapes the scenario except variant and dialect."""
        text = " ".join(
            f"{k}={v}" for k, v in self.settings() if k not in ("variant", "dialect")
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_INT_KEYS = (
    "tasks", "changes", "contractors", "seed", "retry_budget", "report_interval",
    "prey_period", "max_ticks",
)


def parse_grid(text: str) -> tuple[int, int]:
    w, sep, h = str(text).lower().partition("x")
    if not sep:
        raise ConfigError(f"grid must look like WxH, got {text!r}")
    return int(w), int(h)


def parse_latency(text: str) -> tuple[int, int]:
    base, _, jitter = str(text).partition(":")
    return int(base), int(jitter or 0)


def parse_settings(settings: Mapping[str, Any]) -> dict[str, Any]:
    """Turn raw ``key -> value`` text into :class:`RunConfig` field updates."""
    out: dict[str, Any] = {}
    for key, value in settings.items():
        if value is None:
            continue
        key = key.strip().replace("-", "_")
        if key == "variant":
            out["variant"] = ProtocolVariant.parse(value)
        elif key == "dialect":
            out["dialect"] = get_dialect(value).name
        elif key == "grid":
            out["width"], out["height"] = parse_grid(value)
        elif key == "latency":
            out["latency_base"], out["latency_jitter"] = parse_latency(value)
        elif key == "progress_policy":
            out["progress_policy"] = ProgressPolicy(str(value).strip().lower())
        elif key == "bid_window":
            text = str(value).strip().lower()
            out["bid_window"] = None if text == "auto" else int(text)
        elif key == "work_rate":
            out["work_rate"] = float(value)
        elif key in _INT_KEYS:
            out[key] = int(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return out


def read_config_file(path: "str | Path") -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out
