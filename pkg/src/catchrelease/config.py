"""Layered runtime configuration.

Precedence, lowest to highest: built-in defaults, one YAML file, then
``CATCHRELEASE_*`` environment variables. The file is found by explicit
path, then the ``CATCHRELEASE_CONFIG`` variable, then ``./catchrelease.conf``
if present. Environment keys nest with double underscores
(``CATCHRELEASE_QC__BLUR_MIN=30``) and values are parsed as YAML scalars so
numbers and lists come through typed.

Unknown keys fail loudly: a typo in a threshold name must not silently run
with the default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import yaml

from .align import DEFAULT_LEAD_PAD_S, DEFAULT_MIN_CONFIDENCE
from .dataset import DEFAULT_RATIOS, DatasetStore, validate_ratios
from .errors import BadRatios, ConfigError
from .media import MediaStore
from .qc import QcThresholds
from .registry import Registry, builtin_seed_path, load_registry
from .store import ContentStore
from .transcribe import (
    RemoteTranscriber,
    ScriptedTranscriber,
    StaticTranscriber,
)
from .workflow import WorkflowStore

ENV_PREFIX = "CATCHRELEASE_"
ENV_CONFIG_VAR = "CATCHRELEASE_CONFIG"
DEFAULT_CONFIG_NAME = "catchrelease.conf"

TRANSCRIBER_KINDS = ("static", "scripted", "remote")


@dataclass(frozen=True)
class TranscriberConfig:
    kind: str = "static"
    script: str | None = None
    endpoint: str | None = None
    token: str | None = None
    timeout_s: float = 30.0


@dataclass(frozen=True)
class AlignConfig:
    lead_pad_s: float = DEFAULT_LEAD_PAD_S
    min_confidence: float = DEFAULT_MIN_CONFIDENCE


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0


@dataclass(frozen=True)
class ServiceConfig:
    endpoint: str = "http://127.0.0.1:8077"
    token: str | None = None
    tokens: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AppConfig:
    store_root: str = "./catchrelease-store"
    registry_seed: str | None = None
    decoder_cmd: str = "builtin"
    audio_cmd: str | None = None
    language_hint: str = "id"
    transcriber: TranscriberConfig = TranscriberConfig()
    qc: QcThresholds = QcThresholds()
    align: AlignConfig = AlignConfig()
    split: SplitConfig = SplitConfig()
    service: ServiceConfig = ServiceConfig()


_TOP_KEYS = {
    "store_root", "registry_seed", "decoder_cmd", "audio_cmd", "language_hint",
    "transcriber", "qc", "align", "split", "service",
}
_SECTION_KEYS = {
    "transcriber": {"kind", "script", "endpoint", "token", "timeout_s"},
    "qc": {"min_px", "luma_min", "luma_max", "blur_min", "max_hamming"},
    "align": {"lead_pad_s", "min_confidence"},
    "split": {"ratios", "seed"},
    "service": {"endpoint", "token", "tokens"},
}


def resolve_config_path(explicit: str | None, environ=None) -> Path | None:
    environ = os.environ if environ is None else environ
    if explicit:
        p = Path(explicit)
        if not p.is_file():
            raise ConfigError(f"config file not found: {explicit}")
        return p
    from_env = environ.get(ENV_CONFIG_VAR)
    if from_env:
        p = Path(from_env)
        if not p.is_file():
            raise ConfigError(f"{ENV_CONFIG_VAR} points at a missing file: {from_env}")
        return p
    p = Path(DEFAULT_CONFIG_NAME)
    return p if p.is_file() else None


def _parse_scalar(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"unparseable override value {text!r}") from e


def env_overrides(environ=None) -> dict:
    """Nested dict from CATCHRELEASE_* variables (double underscore nests)."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or name == ENV_CONFIG_VAR:
            continue
        path = [part.lower() for part in name[len(ENV_PREFIX):].split("__")]
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {name} nests under a scalar")
        node[path[-1]] = _parse_scalar(value)
    return out


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _check_keys(data: dict, allowed: set, where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(sorted(unknown))}")


def _section(data: dict, name: str) -> dict:
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} section must be a mapping")
    _check_keys(raw, _SECTION_KEYS[name], name)
    return raw


def load_config(path: str | None = None, environ=None) -> AppConfig:
    resolved = resolve_config_path(path, environ)
    data: dict = {}
    if resolved is not None:
        try:
            loaded = yaml.safe_load(resolved.read_text())
        except yaml.YAMLError as e:
            raise ConfigError(f"malformed config {resolved}: {e}") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {resolved} must be a mapping")
        data = loaded
    data = _merge(data, env_overrides(environ))
    _check_keys(data, _TOP_KEYS, "config")

    tr = _section(data, "transcriber")
    qc = _section(data, "qc")
    al = _section(data, "align")
    sp = _section(data, "split")
    sv = _section(data, "service")

    try:
        transcriber = TranscriberConfig(**tr)
        qc_thresholds = QcThresholds(**qc) if qc else QcThresholds()
        align_cfg = AlignConfig(**al)
        raw_ratios = sp.get("ratios", DEFAULT_RATIOS)
        split_cfg = SplitConfig(
            ratios=tuple(float(r) for r in raw_ratios),
            seed=int(sp.get("seed", 0)),
        )
        service_cfg = ServiceConfig(**sv)
        cfg = AppConfig(
            store_root=str(data.get("store_root", AppConfig.store_root)),
            registry_seed=data.get("registry_seed"),
            decoder_cmd=str(data.get("decoder_cmd", AppConfig.decoder_cmd)),
            audio_cmd=data.get("audio_cmd"),
            language_hint=str(data.get("language_hint", AppConfig.language_hint)),
            transcriber=transcriber,
            qc=qc_thresholds,
            align=align_cfg,
            split=split_cfg,
            service=service_cfg,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad config value: {e}") from e

    if cfg.transcriber.kind not in TRANSCRIBER_KINDS:
        raise ConfigError(
            f"transcriber.kind must be one of {TRANSCRIBER_KINDS}, got {cfg.transcriber.kind!r}"
        )
    if cfg.transcriber.kind == "scripted":
        if not cfg.transcriber.script:
            raise ConfigError("scripted transcriber needs a script path")
        if not Path(cfg.transcriber.script).is_file():
            raise ConfigError(f"transcriber script not found: {cfg.transcriber.script}")
    if cfg.transcriber.kind == "remote" and not cfg.transcriber.endpoint:
        raise ConfigError("remote transcriber needs an endpoint")
    if cfg.registry_seed and not Path(cfg.registry_seed).is_file():
        raise ConfigError(f"registry seed not found: {cfg.registry_seed}")
    try:
        validate_ratios(cfg.split.ratios)
    except BadRatios as e:
        raise ConfigError(f"bad split ratios: {e}") from e
    if not isinstance(cfg.service.tokens, dict):
        raise ConfigError("service.tokens must be a mapping of token to role")
    return cfg


def make_transcriber(tc: TranscriberConfig):
    if tc.kind == "scripted":
        return ScriptedTranscriber(Path(tc.script))
    if tc.kind == "remote":
        return RemoteTranscriber(tc.endpoint, token=tc.token, timeout_s=tc.timeout_s)
    return StaticTranscriber([])


def build_runtime(cfg: AppConfig) -> SimpleNamespace:
    """Construct every store the pipeline needs, rooted at cfg.store_root."""
    root = Path(cfg.store_root)
    root.mkdir(parents=True, exist_ok=True)
    content = ContentStore(root)
    registry: Registry = load_registry(
        Path(cfg.registry_seed) if cfg.registry_seed else builtin_seed_path()
    )
    media = MediaStore(content, decoder_cmd=cfg.decoder_cmd, audio_cmd=cfg.audio_cmd)
    dataset = DatasetStore(root / "dataset")
    workflow = WorkflowStore(root / "workflow", registry, dataset, content)
    return SimpleNamespace(
        config=cfg,
        content=content,
        registry=registry,
        media=media,
        dataset=dataset,
        workflow=workflow,
        transcriber=make_transcriber(cfg.transcriber),
    )
