"""TOML model configuration.

Sections: ``[data]`` (columns, outcome, optional transforms), ``[flow]``
(reference flow and base distribution), ``[location]`` / ``[scale]``
(term lists), ``[training]``.  Example::

    [data]
    features = ["x1", "x2"]
    outcome = "continuous"
    outcome_col = "y"

    [flow]
    kind = "bernstein"
    base = "normal"
    order = 12

    [location]
    terms = ["intercept", "linear(x1)", "nbf(x2)"]

    [scale]
    terms = ["intercept"]

    [training]
    learning_rate = 0.001
    epochs = 200

Terms: ``intercept``, ``linear(col)``, ``nbf(col)``, ``bivariate(a,b)``,
``deep(*)``.  Optional per-section keys ``nbf_hidden``, ``bivariate_hidden``
and ``deep_hidden`` override the default architectures.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .dataio import DatasetSchema, OutcomeSpec
from .model import FlowSpec, ModelSpec, TermSpec
from .training import TrainConfig

_TERM_RE = re.compile(r"^(intercept|linear|nbf|bivariate|deep)"
                      r"(?:\(([^)]*)\))?$")


class ConfigError(Exception):
    """Malformed or inconsistent configuration."""


@dataclass
class DataConfig:
    schema: DatasetSchema
    transforms: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class AppConfig:
    data: DataConfig
    model: ModelSpec
    training: TrainConfig


def parse_term(text: str, hidden_overrides: dict) -> TermSpec:
    m = _TERM_RE.match(text.strip())
    if not m:
        raise ConfigError(f"cannot parse term {text!r}")
    kind, args = m.group(1), m.group(2)
    names = tuple(a.strip() for a in args.split(",")) if args else ()
    if kind == "intercept":
        if names:
            raise ConfigError("intercept takes no arguments")
        return TermSpec("intercept")
    if kind == "deep":
        if names not in ((), ("*",)):
            raise ConfigError("deep term is written deep(*)")
        return TermSpec("deep", (), hidden_overrides.get("deep"))
    if kind in ("linear", "nbf"):
        if len(names) != 1 or not names[0]:
            raise ConfigError(f"{kind} needs exactly one feature name")
        hidden = hidden_overrides.get("nbf") if kind == "nbf" else None
        return TermSpec(kind, names, hidden)
    if len(names) != 2 or not all(names):
        raise ConfigError("bivariate needs exactly two feature names")
    return TermSpec("bivariate", names, hidden_overrides.get("bivariate"))


def _parse_terms(section: dict, name: str) -> list[TermSpec]:
    terms = section.get("terms")
    if not isinstance(terms, list) or not terms:
        raise ConfigError(f"[{name}] needs a non-empty 'terms' list")
    overrides = {}
    for key, short in (("nbf_hidden", "nbf"), ("bivariate_hidden", "bivariate"),
                       ("deep_hidden", "deep")):
        if key in section:
            overrides[short] = tuple(int(w) for w in section[key])
    return [parse_term(t, overrides) for t in terms]


def _parse_outcome(data: dict) -> OutcomeSpec:
    kind = data.get("outcome")
    try:
        if kind == "continuous":
            return OutcomeSpec("continuous", col=data["outcome_col"])
        if kind == "ordinal":
            return OutcomeSpec("ordinal", col=data["outcome_col"],
                               levels=int(data["levels"]))
        if kind == "survival":
            return OutcomeSpec("survival", time_col=data["time_col"],
                               status_col=data["status_col"])
        if kind == "interval":
            return OutcomeSpec("interval", lo_col=data["lo_col"],
                               hi_col=data["hi_col"])
    except KeyError as exc:
        raise ConfigError(f"[data] outcome {kind!r} needs key {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"[data] bad outcome spec: {exc}") from None
    raise ConfigError(f"[data] unknown outcome kind {kind!r}")


_TRANSFORM_RE = re.compile(r"^(log|logp1|sub_min)\(([^)]+)\)$")


def _parse_transforms(data: dict) -> list[tuple[str, str]]:
    out = []
    for t in data.get("transforms", []):
        m = _TRANSFORM_RE.match(t.strip())
        if not m:
            raise ConfigError(f"cannot parse transform {t!r}")
        out.append((m.group(1), m.group(2).strip()))
    return out


def parse_config(path) -> AppConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None

    for sec in ("data", "flow", "location"):
        if sec not in raw:
            raise ConfigError(f"missing [{sec}] section")

    data = raw["data"]
    features = data.get("features")
    if not isinstance(features, list) or not features:
        raise ConfigError("[data] needs a non-empty 'features' list")
    outcome = _parse_outcome(data)
    schema = DatasetSchema([str(f) for f in features], outcome)
    transforms = _parse_transforms(data)

    flow_sec = raw["flow"]
    kind = flow_sec.get("kind")
    if kind not in ("monotone_net", "bernstein", "ordinal"):
        raise ConfigError(f"[flow] unknown kind {kind!r}")
    base = flow_sec.get("base", "normal")
    if base not in ("logistic", "normal", "minimum_extreme_value"):
        raise ConfigError(f"[flow] unknown base {base!r}")
    flow = FlowSpec(kind,
                    hidden=tuple(int(w) for w in flow_sec.get("hidden",
                                                              (10, 10))),
                    order=int(flow_sec.get("order", 30)),
                    levels=int(flow_sec.get("levels", outcome.levels)))
    if kind == "ordinal":
        if outcome.kind != "ordinal":
            raise ConfigError("[flow] ordinal flow needs an ordinal outcome")
        if flow.levels < 2:
            raise ConfigError("[flow] ordinal flow needs levels >= 2")
    if kind == "bernstein" and flow.order < 1:
        raise ConfigError("[flow] bernstein order must be >= 1")

    location = _parse_terms(raw["location"], "location")
    scale = _parse_terms(raw["scale"], "scale") if "scale" in raw else []

    train_sec = raw.get("training", {})
    try:
        training = TrainConfig(**{str(k): v for k, v in train_sec.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[training] {exc}") from None

    spec = ModelSpec(flow, location, scale, base)
    _check_features(spec, schema)
    return AppConfig(DataConfig(schema, transforms), spec, training)


def _check_features(spec: ModelSpec, schema: DatasetSchema) -> None:
    for t in spec.location + spec.scale:
        for f in t.features:
            if f not in schema.features:
                raise ConfigError(
                    f"term {t.kind} references unknown feature {f!r}")
