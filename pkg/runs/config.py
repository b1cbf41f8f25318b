"""
Run configuration files: INI `key = value` sections read with configparser and
cleaned section by section with the forms in runs.forms before anything runs.
"""

import configparser
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .forms import SECTION_FORMS

logger = logging.getLogger(__name__)

COMMANDS = (
    "spectrum",
    "photon_number_scan",
    "kernel_norm",
    "equivalence",
    "pull_through_check",
    "scattering_cells",
)


class ConfigError(Exception):
    """Raised when a run configuration cannot be read or fails validation."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    command: str
    physics: dict
    grid: dict
    solver: dict
    scattering: dict
    output: dict
    digest: str

    @property
    def stem(self) -> str:
        return self.output["stem"] or self.command

    @property
    def directory(self) -> Path:
        return Path(self.output["directory"])


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(item) for item in value]
    return value


def config_digest(command: str, sections: dict) -> str:
    canonical = {"command": command, **{name: {k: _jsonable(v) for k, v in values.items()} for name, values in sections.items()}}
    payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _clean_section(name: str, raw: dict) -> dict:
    form_class = SECTION_FORMS[name]
    unknown = sorted(set(raw) - set(form_class.base_fields))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "Unknown key.")
    form = form_class(data=raw)
    if not form.is_valid():
        field, errors = next(iter(form.errors.items()))
        raise ConfigError(f"{name}.{field}", errors[0])
    return form.cleaned_data


def parse_config(text: str, command: str, source: str = "<config>") -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError("command", f"Unknown command {command!r}.")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("file", f"{source} is not a valid config file: {exc}") from exc
    if parser.defaults():
        raise ConfigError("DEFAULT", "A [DEFAULT] section is not supported; repeat keys in their sections.")
    unknown = [section for section in parser.sections() if section not in SECTION_FORMS]
    if unknown:
        raise ConfigError(unknown[0], "Unknown section.")

    sections = {
        name: _clean_section(name, dict(parser.items(name)) if parser.has_section(name) else {})
        for name in SECTION_FORMS
    }
    digest = config_digest(command, sections)
    logger.debug("Config %s for %s has digest %s", source, command, digest)
    return RunConfig(command=command, digest=digest, **sections)


def load_config(path, command: str) -> RunConfig:
    if path is None:
        return parse_config("", command)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("file", f"Cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, command, source=str(path))
