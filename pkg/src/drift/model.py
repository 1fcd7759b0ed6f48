"""Model assembly and persistence.

A :class:`DriftModel` couples a base distribution, a reference flow,
location/scale predictors and the feature standardizer, and owns the flat
parameter vector that training updates and the model file stores.

Model files are versioned JSON: architecture descriptor plus the raw
parameter array.  Reloading rebuilds the exact same layout, so a saved
model predicts bit-identically to the in-memory one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import basedist, diffcore as dc
from .dataio import DatasetSchema, Standardizer
from .flows import (BernsteinFlow, ConditionalInverseFlow, MonotoneNetFlow,
                    OrdinalCutpoints)
from .likelihood import Exact, Interval
from .predictors import (Bivariate, Deep, Intercept, Linear, NeuralBasis,
                         Predictor)

FORMAT_VERSION = 1
DOMAIN_EXPANSION = 0.05  # widen the observed outcome range by 5% per side


@dataclass
class FlowSpec:
    kind: str                       # monotone_net | bernstein | ordinal
    hidden: tuple[int, ...] = (10, 10)
    order: int = 30
    levels: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hidden": list(self.hidden),
                "order": self.order, "levels": self.levels}

    @staticmethod
    def from_dict(d: dict) -> "FlowSpec":
        return FlowSpec(d["kind"], tuple(d.get("hidden", (10, 10))),
                        d.get("order", 30), d.get("levels", 0))


@dataclass
class TermSpec:
    kind: str                       # intercept | linear | nbf | bivariate | deep
    features: tuple[str, ...] = ()
    hidden: Optional[tuple[int, ...]] = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "features": list(self.features)}
        if self.hidden is not None:
            d["hidden"] = list(self.hidden)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TermSpec":
        hidden = tuple(d["hidden"]) if d.get("hidden") is not None else None
        return TermSpec(d["kind"], tuple(d.get("features", ())), hidden)


@dataclass
class ModelSpec:
    flow: FlowSpec
    location: list[TermSpec]
    scale: list[TermSpec] = field(default_factory=list)
    base: str = "normal"

    def to_dict(self) -> dict:
        return {"base": self.base, "flow": self.flow.to_dict(),
                "location": [t.to_dict() for t in self.location],
                "scale": [t.to_dict() for t in self.scale]}

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        return ModelSpec(FlowSpec.from_dict(d["flow"]),
                         [TermSpec.from_dict(t) for t in d["location"]],
                         [TermSpec.from_dict(t) for t in d.get("scale", [])],
                         d.get("base", "normal"))


class _Bound:
    """A model bound to one parameter representation (floats or Vars)."""

    __slots__ = ("model", "params", "prep")

    def __init__(self, model: "DriftModel", params, prep) -> None:
        self.model = model
        self.params = params
        self.prep = prep


class DriftModel:
    def __init__(self, spec: ModelSpec, schema: DatasetSchema,
                 standardizer: Standardizer,
                 cif: ConditionalInverseFlow, n_params: int) -> None:
        self.spec = spec
        self.schema = schema
        self.standardizer = standardizer
        self.base = basedist.get(spec.base)
        self.cif = cif
        self.params = np.zeros(n_params, dtype=np.float64)
        self.train_config = None    # training.TrainConfig, set by the CLI
        self.fit_report = None      # training.FitReport, set by fit()

    @property
    def n_params(self) -> int:
        return self.params.size

    def bind(self, tape: Optional[dc.Tape] = None, rng=None) -> _Bound:
        """Prepare for evaluation: floats for prediction, tape params for
        gradients.  ``rng`` enables dropout in deep terms (training only)."""
        if tape is None:
            seq: Sequence = [float(v) for v in self.params]
        else:
            seq = [tape.param(float(v)) for v in self.params]
        return _Bound(self, seq, self.cif.prepare(seq, rng))

    def standardize(self, x_matrix: np.ndarray) -> np.ndarray:
        return self.standardizer.transform(x_matrix)

    def standardize_row(self, x_row) -> np.ndarray:
        return self.standardizer.transform(np.asarray(x_row, dtype=float)
                                           .reshape(1, -1))[0]

    def domain(self) -> tuple[float, float]:
        ref = self.cif.reference
        if isinstance(ref, OrdinalCutpoints):
            raise ValueError("ordinal flows have no continuous domain")
        return ref.domain


class ParamAllocator:
    def __init__(self) -> None:
        self.n = 0

    def add(self, component):
        self.n += component.n_params
        return component


def outcome_domain(outcomes, expansion: float = DOMAIN_EXPANSION
                   ) -> tuple[float, float]:
    """Observed range of finite outcome values, widened a little so the
    training data sits strictly inside."""
    lo = math.inf
    hi = -math.inf
    for o in outcomes:
        if isinstance(o, Exact):
            lo, hi = min(lo, o.y), max(hi, o.y)
        elif isinstance(o, Interval):
            if math.isfinite(o.lo):
                lo, hi = min(lo, o.lo), max(hi, o.lo)
            if math.isfinite(o.hi):
                lo, hi = min(lo, o.hi), max(hi, o.hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("no finite outcome values to set a domain from")
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = expansion * (hi - lo)
    return lo - pad, hi + pad


def _build_term(tspec: TermSpec, schema: DatasetSchema,
                alloc: ParamAllocator):
    def feat(name: str) -> int:
        try:
            return schema.features.index(name)
        except ValueError:
            raise ValueError(f"unknown feature {name!r} in term "
                             f"{tspec.kind}") from None

    kind = tspec.kind
    off = alloc.n
    if kind == "intercept":
        return alloc.add(Intercept(off))
    if kind == "linear":
        return alloc.add(Linear(feat(tspec.features[0]), off))
    if kind == "nbf":
        kw = {} if tspec.hidden is None else {"hidden": tspec.hidden}
        return alloc.add(NeuralBasis(feat(tspec.features[0]), off, **kw))
    if kind == "bivariate":
        kw = {} if tspec.hidden is None else {"hidden": tspec.hidden}
        return alloc.add(Bivariate(feat(tspec.features[0]),
                                   feat(tspec.features[1]), off, **kw))
    if kind == "deep":
        kw = {} if tspec.hidden is None else {"hidden": tspec.hidden}
        return alloc.add(Deep(len(schema.features), off, **kw))
    raise ValueError(f"unknown term kind {tspec.kind!r}")


def build_model(spec: ModelSpec, schema: DatasetSchema,
                standardizer: Standardizer,
                domain: Optional[tuple[float, float]]) -> DriftModel:
    """Assemble a model with a fixed parameter layout.

    ``domain`` is the outcome range for continuous flows (ignored for
    ordinal); pass the stored value when reloading so offsets and scaling
    reproduce exactly.
    """
    alloc = ParamAllocator()
    fspec = spec.flow
    if fspec.kind == "monotone_net":
        if domain is None:
            raise ValueError("continuous flows need an outcome domain")
        flow = alloc.add(MonotoneNetFlow(fspec.hidden, domain, alloc.n))
    elif fspec.kind == "bernstein":
        if domain is None:
            raise ValueError("continuous flows need an outcome domain")
        flow = alloc.add(BernsteinFlow(fspec.order, domain, alloc.n))
    elif fspec.kind == "ordinal":
        levels = fspec.levels or getattr(schema.outcome, "levels", 0)
        flow = alloc.add(OrdinalCutpoints(levels, alloc.n))
    else:
        raise ValueError(f"unknown flow kind {fspec.kind!r}")

    if not spec.location:
        raise ValueError("location predictor needs at least one term")
    loc_terms = [_build_term(t, schema, alloc) for t in spec.location]
    location = Predictor(loc_terms, len(schema.features), "identity")
    scale = None
    if spec.scale:
        scale_terms = [_build_term(t, schema, alloc) for t in spec.scale]
        scale = Predictor(scale_terms, len(schema.features), "exp")

    cif = ConditionalInverseFlow(flow, location, scale)
    return DriftModel(spec, schema, standardizer, cif, alloc.n)


def build_from_dataset(spec: ModelSpec, dataset) -> DriftModel:
    """Build against a training dataset: fit the standardizer and derive
    the outcome domain from the observed outcomes."""
    standardizer = Standardizer.fit(dataset.x)
    domain = None
    if spec.flow.kind != "ordinal":
        domain = outcome_domain(dataset.outcomes)
        standardizer.y_domain = domain
    return build_model(spec, dataset.schema, standardizer, domain)


# -- model file --------------------------------------------------------------

def model_to_dict(model: DriftModel) -> dict:
    ref = model.cif.reference
    d: dict = {
        "format_version": FORMAT_VERSION,
        "schema": model.schema.to_dict(),
        "standardizer": model.standardizer.to_dict(),
        "spec": model.spec.to_dict(),
        "domain": None if isinstance(ref, OrdinalCutpoints)
                  else list(ref.domain),
        "params": [float(v) for v in model.params],
        "train_config": None if model.train_config is None
                        else model.train_config.to_dict(),
        "fit_report": None if model.fit_report is None
                      else model.fit_report.to_dict(include_wall=False),
    }
    return d


def model_from_dict(d: dict) -> DriftModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported model file version {d.get('format_version')!r}")
    schema = DatasetSchema.from_dict(d["schema"])
    standardizer = Standardizer.from_dict(d["standardizer"])
    spec = ModelSpec.from_dict(d["spec"])
    domain = tuple(d["domain"]) if d.get("domain") is not None else None
    model = build_model(spec, schema, standardizer, domain)
    params = np.asarray(d["params"], dtype=np.float64)
    if params.size != model.n_params:
        raise ValueError(
            f"parameter vector length {params.size} does not match "
            f"architecture ({model.n_params})")
    model.params[:] = params
    if d.get("train_config") is not None:
        from .training import TrainConfig
        model.train_config = TrainConfig.from_dict(d["train_config"])
    if d.get("fit_report") is not None:
        from .training import FitReport
        model.fit_report = FitReport.from_dict(d["fit_report"])
    return model


def save_model(model: DriftModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> DriftModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
