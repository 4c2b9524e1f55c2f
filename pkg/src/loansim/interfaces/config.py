"""INI configuration: one section per constant group.

    [process]   environment constants (ProcessSpec)
    [bank]      bank rule thresholds (BankPolicy)
    [learners]  experiment and learner defaults (ExperimentConfig)

Tuples are comma-separated. Unknown keys are rejected so typos surface.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields
from typing import Optional

from ..core import DEFAULT_SPEC, ProcessSpec
from ..evaluation import ExperimentConfig
from ..policies import DEFAULT_BANK, BankPolicy

SEED_ENV = "LOANSIM_SEED"
SECTIONS = {"process": ProcessSpec, "bank": BankPolicy, "learners": ExperimentConfig}


@dataclass(frozen=True)
class Settings:
    spec: ProcessSpec = DEFAULT_SPEC
    bank: BankPolicy = DEFAULT_BANK
    learners: ExperimentConfig = field(default_factory=ExperimentConfig)


def default_seed(fallback: int = 0) -> int:
    value = os.environ.get(SEED_ENV)
    if value is None or value.strip() == "":
        return fallback
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {value!r}") from None


def _convert(text: str, current):
    text = text.strip()
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(current, tuple):
        return tuple(float(p) for p in text.split(",") if p.strip())
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if current is None:
        return None if text.lower() in ("", "none") else int(text)
    return text


def _render(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return str(value)


def _build(cls, section: Optional[configparser.SectionProxy], base):
    if section is None:
        return base
    known = {f.name for f in fields(cls)}
    changes = {}
    for key, text in section.items():
        if key not in known:
            raise ValueError(f"unknown key {key!r} in [{section.name}]")
        changes[key] = _convert(text, getattr(base, key))
    return cls(**{**{f.name: getattr(base, f.name) for f in fields(cls) if f.init}, **changes})


def load_config(path) -> Settings:
    parser = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    for name in parser.sections():
        if name not in SECTIONS:
            raise ValueError(f"unknown section [{name}]")
    get = lambda name: parser[name] if parser.has_section(name) else None  # noqa: E731
    return Settings(
        _build(ProcessSpec, get("process"), DEFAULT_SPEC),
        _build(BankPolicy, get("bank"), DEFAULT_BANK),
        _build(ExperimentConfig, get("learners"), ExperimentConfig()),
    )


def dump_config(settings: Optional[Settings] = None) -> str:
    settings = settings or Settings()
    parser = configparser.ConfigParser(interpolation=None)
    for name, obj in (("process", settings.spec), ("bank", settings.bank), ("learners", settings.learners)):
        parser[name] = {f.name: _render(getattr(obj, f.name)) for f in fields(obj) if f.init}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
