"""Configuration parsing.

Two sources of configuration exist:

- The channel library reads its mode once per process from the environment
  (:class:`RrConfig`).
- The harness optionally reads defaults from YAML files
  (:class:`HarnessConfig`), and notifier definitions from ``<id>.yml``
  files (:class:`NtfyConfig`).
"""

import os
import yaml

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping


ENV_MODE = "RR_CHANNEL_MODE"
ENV_RECORD_FILE = "RR_RECORD_FILE"
ENV_DESYNC_MODE = "RR_DESYNC_MODE"
ENV_DESYNC_TIMEOUT_MS = "RR_DESYNC_TIMEOUT_MS"

DEFAULT_DESYNC_TIMEOUT_MS = 1000



class Mode(str, Enum):
    NOOP = "noop"
    RECORD = "record"
    REPLAY = "replay"


class DesyncPolicy(str, Enum):
    ERROR_OUT = "error"
    KEEP_GOING = "keep_going"


def _parse_enum(enum_cls: type[Enum], name: str, raw: str) -> Any:
    try:
        return enum_cls(raw.strip().lower())
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ValueError(f"Invalid value '{raw}' for {name} (expected one of: {choices})")


def _parse_positive_int(name: str, raw: Any) -> int:
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ValueError(f"Invalid value '{raw}' for {name} (expected a positive integer)")
    if value <= 0:
        raise ValueError(f"Invalid value '{raw}' for {name} (expected a positive integer)")
    return value



@dataclass(frozen=True)
class RrConfig:
    """Record/replay mode of the process.

    Attributes:
        mode: noop, record or replay.
        desync_policy: What replay does on divergence.
        record_file: Log path written in record mode and read in replay mode.
        desync_timeout_ms: How long replay waits for an expected sender.
    """

    mode: Mode = Mode.NOOP
    desync_policy: DesyncPolicy = DesyncPolicy.KEEP_GOING
    record_file: str | None = None
    desync_timeout_ms: int = DEFAULT_DESYNC_TIMEOUT_MS


    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "RrConfig":
        """Build the configuration from environment variables.

        Raises:
            ValueError: on an unknown mode or policy, a non-positive timeout,
                or a missing ``RR_RECORD_FILE`` in record or replay mode.
        """
        env = os.environ if environ is None else environ

        mode = _parse_enum(Mode, ENV_MODE, env.get(ENV_MODE, Mode.NOOP.value))
        policy = _parse_enum(
            DesyncPolicy, ENV_DESYNC_MODE,
            env.get(ENV_DESYNC_MODE, DesyncPolicy.KEEP_GOING.value),
        )
        timeout = _parse_positive_int(
            ENV_DESYNC_TIMEOUT_MS,
            env.get(ENV_DESYNC_TIMEOUT_MS, DEFAULT_DESYNC_TIMEOUT_MS),
        )
        record_file = env.get(ENV_RECORD_FILE) or None

        if mode is not Mode.NOOP and record_file is None:
            raise ValueError(f"{ENV_RECORD_FILE} must be set in {mode.value} mode")

        return cls(mode, policy, record_file, timeout)


    def to_env(self) -> dict[str, str]:
        """Return the environment variables describing this configuration."""
        env = {
            ENV_MODE: self.mode.value,
            ENV_DESYNC_MODE: self.desync_policy.value,
            ENV_DESYNC_TIMEOUT_MS: str(self.desync_timeout_ms),
        }
        if self.record_file:
            env[ENV_RECORD_FILE] = self.record_file
        return env



@dataclass
class FileConfig(ABC):

    path: str


    @classmethod
    @abstractmethod
    def from_yaml(cls, path: str) -> "FileConfig":
        ...


    @classmethod
    def _parse_yaml(cls,
            path: str,
            required_fields: list[str],
            optional_fields: dict[str, Any] = {}
        ) -> dict:

        """Load and validate a YAML configuration file.

        Args:
            path: Path to the YAML file to load.
            required_fields: Fields required to have a value set in the YAML file.
            optional_fields: Fields not required in the YAML file with their default values.

        Returns:
            data: A dictionary of fields and their (default) values.

        Raises:
            FileNotFoundError: If the file does not exist.
            ValueError: If the file is empty, not a mapping, or missing required keys.
        """

        if not os.path.exists(path):
            raise FileNotFoundError(f"Config file not found: {path}")

        with open(path, 'r') as f:
            data = yaml.safe_load(f)

        if data is None:
            raise ValueError(f"Config file {path} is empty")

        if not isinstance(data, dict):
            raise ValueError(f"Config file {path} must be a YAML dictionary")

        for field in required_fields:
            if field not in data or data[field] is None:
                raise ValueError(f"Missing or empty required field '{field}' in {path}")

        # Ensure optional fields are not None
        for field, default in optional_fields.items():
            filedata = data.get(field, None)
            data[field] = filedata if filedata is not None else default

        unknown = set(data) - set(required_fields) - set(optional_fields)
        if unknown:
            raise ValueError(f"Unknown fields {sorted(unknown)} in {path}")

        data["path"] = path

        return data



@dataclass
class HarnessConfig(FileConfig):
    """Harness defaults, from YAML or built-in.

    Attributes:
        path: Source file, empty for built-in defaults.
        TIME_LIMIT_MS: Wall-clock limit per run.
        EXPECTED_STATUS: Exit status of an expected run.
        EXPECTED_STDOUT_SHA256: Optional hex digest the child's stdout must match.
        MAX_TRIES: Attempts for record-until-expected.
        DESYNC_MODE: Desync policy passed to replayed children.
        DESYNC_TIMEOUT_MS: Desync timeout passed to replayed children.
        NOTIFY: Notifier ids to send summaries to.
        NOTIFIERS_DIR: Directory holding notifier YAML files.
    """

    TIME_LIMIT_MS: int = 30_000
    EXPECTED_STATUS: int = 0
    EXPECTED_STDOUT_SHA256: str | None = None
    MAX_TRIES: int = 100
    DESYNC_MODE: str = DesyncPolicy.KEEP_GOING.value
    DESYNC_TIMEOUT_MS: int = DEFAULT_DESYNC_TIMEOUT_MS
    NOTIFY: list[str] | None = None
    NOTIFIERS_DIR: str = "notifiers"


    @classmethod
    def defaults(cls) -> "HarnessConfig":
        return cls(path="", NOTIFY=[])


    @classmethod
    def from_yaml(cls, path: str) -> "HarnessConfig":
        """Load and validate a harness YAML file.

        Raises:
            FileNotFoundError: If the file does not exist.
            ValueError: If the file is empty, not a mapping, has unknown keys
                or invalid values.
        """
        defaults = cls.defaults()
        data = super()._parse_yaml(
            path,
            [],
            {
                "TIME_LIMIT_MS": defaults.TIME_LIMIT_MS,
                "EXPECTED_STATUS": defaults.EXPECTED_STATUS,
                "EXPECTED_STDOUT_SHA256": "",
                "MAX_TRIES": defaults.MAX_TRIES,
                "DESYNC_MODE": defaults.DESYNC_MODE,
                "DESYNC_TIMEOUT_MS": defaults.DESYNC_TIMEOUT_MS,
                "NOTIFY": [],
                "NOTIFIERS_DIR": defaults.NOTIFIERS_DIR,
            }
        )

        data["EXPECTED_STDOUT_SHA256"] = data["EXPECTED_STDOUT_SHA256"] or None
        for field in ("TIME_LIMIT_MS", "MAX_TRIES", "DESYNC_TIMEOUT_MS"):
            data[field] = _parse_positive_int(field, data[field])
        data["EXPECTED_STATUS"] = int(data["EXPECTED_STATUS"])
        data["DESYNC_MODE"] = _parse_enum(DesyncPolicy, "DESYNC_MODE", str(data["DESYNC_MODE"])).value

        if isinstance(data["NOTIFY"], str):
            data["NOTIFY"] = [data["NOTIFY"]]

        # Relative notifier directories are relative to the config file
        if not os.path.isabs(data["NOTIFIERS_DIR"]):
            data["NOTIFIERS_DIR"] = os.path.join(os.path.dirname(os.path.abspath(path)), data["NOTIFIERS_DIR"])

        return cls(**data)



@dataclass
class NotificationServiceConfig(FileConfig, ABC):
    """Representation of a notification service configuration loaded from YAML.

    Attributes:
        path: Path of the loaded config file.
        TYPE: Type of the notification service. Currently supported: ``[ntfy]``
    """

    TYPE: str = ""


    @classmethod
    def _parse_yaml(cls, path: str, required_fields: list[str], optional_fields: dict[str, Any] = {}) -> dict:
        required_fields.append("TYPE")
        return super()._parse_yaml(path, required_fields, optional_fields)



@dataclass
class NtfyConfig(NotificationServiceConfig):
    """Representation of an NTFY service configuration loaded from YAML.

    Attributes:
        path: Path of the loaded config file.
        TYPE: Type of the notification service.
        URL: URL of the server to send POST requests to
    """

    URL: str = ""


    @classmethod
    def from_yaml(cls, path: str) -> "NtfyConfig":
        """Load and validate a YAML configuration file.

        Raises:
            FileNotFoundError: If the file does not exist.
            ValueError: If the file is empty, not a mapping, or missing required keys.
        """

        data = super()._parse_yaml(path, ["URL"])

        return cls(**data)
