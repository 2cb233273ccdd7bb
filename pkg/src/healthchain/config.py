"""Gateway configuration: dataclass defaults plus a YAML file format
whose batching keys mirror the channel profile names (batch_timeout,
max_message_count, absolute_max_bytes, preferred_max_bytes).

Durations accept "2s" / "500ms" / "1h" forms; sizes accept "512 KB" /
"99 MB" forms with binary units (KB = 1024, matching the ordering
profile's reading).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

import yaml

from .ledger import OrdererConfig

_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)\s*$")
_DURATION_UNITS = {"ms": 0.001, "s": 1.0, "m": 60.0, "h": 3600.0}

_SIZE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(B|KB|MB|GB)?\s*$", re.IGNORECASE)
_SIZE_UNITS = {"b": 1, "kb": 1024, "mb": 1024**2, "gb": 1024**3}


def parse_duration(value: Union[str, int, float]) -> float:
    """Seconds from a number or a '2s'/'500ms'/'1h' string."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _DURATION_RE.match(value)
    if not m:
        raise ValueError(f"cannot parse duration {value!r}")
    return float(m.group(1)) * _DURATION_UNITS[m.group(2)]


def parse_size(value: Union[str, int]) -> int:
    """Bytes from a number or a '512 KB'/'99 MB' string (binary units)."""
    if isinstance(value, int):
        return value
    m = _SIZE_RE.match(value)
    if not m:
        raise ValueError(f"cannot parse size {value!r}")
    unit = (m.group(2) or "B").lower()
    return int(float(m.group(1)) * _SIZE_UNITS[unit])


@dataclass
class GatewayConfig:
    data_dir: Path = Path("./healthchain-data")
    host: str = "127.0.0.1"
    port: int = 9000
    batch_timeout: float = 2.0
    max_message_count: int = 10
    absolute_max_bytes: int = 99 * 1024**2
    preferred_max_bytes: int = 512 * 1024
    onchain_threshold: int = 1024  # public records above this are refused
    session_ttl: int = 3600
    params_id: str = "modp-2048"  # re-encryption group profile
    channel: str = "healthchain"

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)

    def orderer(self) -> OrdererConfig:
        return OrdererConfig(
            batch_timeout=self.batch_timeout,
            max_message_count=self.max_message_count,
            absolute_max_bytes=self.absolute_max_bytes,
            preferred_max_bytes=self.preferred_max_bytes,
        )


_PARSERS = {
    "data_dir": Path,
    "host": str,
    "port": int,
    "batch_timeout": parse_duration,
    "max_message_count": int,
    "absolute_max_bytes": parse_size,
    "preferred_max_bytes": parse_size,
    "onchain_threshold": parse_size,
    "session_ttl": lambda v: int(parse_duration(v)),
    "params_id": str,
    "channel": str,
}


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[dict] = None) -> GatewayConfig:
    raw: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a mapping")
        raw.update(loaded)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(GatewayConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    kwargs = {key: _PARSERS[key](value) for key, value in raw.items()}
    return GatewayConfig(**kwargs)
