"""INI experiment configuration.

Layout of a config file::

    [experiment]
    kind = lipschitz_sweep      ; lipschitz_sweep | surrogate_sweep | rho_certificate | trajectory_perturb
    layout = one_neuron         ; one_neuron | frozen_bias | two_layer
    hidden = 3                  ; two_layer only
    x = 1.0                     ; comma separated for two_layer
    y = 1.0
    out = results/lipschitz     ; optional, --out wins
    format = both               ; optional, --format wins

    [lipschitz_sweep]           ; exactly one section named after ``kind``
    epsilons = 1e-1, 1e-2, 1e-3

Lists are comma separated. See ``KIND_KEYS`` for each kind's keys.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Any

from .clarke import PATTERN_FIXED, REGION_KINDS
from .errors import ConfigError, LayoutError
from .lipschitz_probe import DEFAULT_EPSILONS
from .model_core import LAYOUT_KINDS, TWO_LAYER, DataPoint, Layout
from .surrogate import DEFAULT_BETAS
from .trajectory import HALT, POLICIES

KINDS = ("lipschitz_sweep", "surrogate_sweep", "rho_certificate", "trajectory_perturb")
FORMATS = ("csv", "json", "both")

EXPERIMENT_KEYS = {"kind", "layout", "hidden", "x", "y", "out", "format"}

_REGION_KEYS = {"region": "half_space_positive", "delta": 0.1, "pattern": None, "fixed_w2": None}

# key -> default (None marks optional without default; REQUIRED must be given)
REQUIRED = object()
KIND_KEYS: dict[str, dict[str, Any]] = {
    "lipschitz_sweep": {"epsilons": DEFAULT_EPSILONS, "anchor_t": 0.0},
    "surrogate_sweep": {
        "betas": DEFAULT_BETAS,
        "family": "softplus",
        "search_interval": (-1.0, 1.0),
    },
    "rho_certificate": {
        "eta": REQUIRED,
        **_REGION_KEYS,
        "center": None,
        "radius": 2.0,
        "samples": 256,
        "pairs": 1000,
        "seed": 0,
    },
    "trajectory_perturb": {
        "eta": REQUIRED,
        "steps": 40,
        "theta0": None,
        "theta0_prime": None,
        "perturbation": 1e-3,
        "seed": 0,
        **_REGION_KEYS,
        "rho": None,
        "radius": 1.0,
        "samples": 256,
        "policy": HALT,
        "tau": None,
    },
}

_FLOAT_LISTS = {"epsilons", "betas", "search_interval", "center", "theta0", "theta0_prime", "fixed_w2"}
_INTS = {"samples", "pairs", "seed", "steps"}
_STRINGS = {"family", "region", "policy"}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    datum: DataPoint
    layout: Layout
    params: dict = field(default_factory=dict)
    out: str | None = None
    fmt: str = "both"

    def to_json(self) -> dict:
        lay = {"kind": self.layout.kind}
        if self.layout.kind == TWO_LAYER:
            lay.update(inputs=self.layout.inputs, hidden=self.layout.hidden)
        params = {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}
        return {
            "kind": self.kind,
            "datum": {"x": self.datum.to_json()[0], "y": self.datum.y},
            "layout": lay,
            "params": params,
        }


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _convert(key: str, text: str):
    if key in _FLOAT_LISTS:
        return _floats(text)
    if key == "pattern":
        return tuple(int(float(t)) for t in text.split(",") if t.strip())
    if key in _INTS:
        return int(text)
    if key in _STRINGS:
        return text.strip()
    return float(text)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ``ConfigError`` listing every problem found."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None

    problems: list[str] = []
    if not cp.has_section("experiment"):
        raise ConfigError(["missing [experiment] section"])
    exp = dict(cp["experiment"])
    for key in exp:
        if key not in EXPERIMENT_KEYS:
            problems.append(f"unknown key [experiment] {key}")
    kind = exp.get("kind", "").strip()
    if kind not in KINDS:
        problems.append(f"[experiment] kind must be one of {', '.join(KINDS)} (got {kind!r})")
        raise ConfigError(problems)
    for sec in cp.sections():
        if sec not in ("experiment", kind):
            problems.append(f"unknown section [{sec}] for kind {kind}")

    missing = [k for k in ("x", "y") if k not in exp]
    if missing:
        problems.append(f"missing required keys in [experiment]: {', '.join(missing)}")

    layout_kind = exp.get("layout", "one_neuron").strip()
    layout = None
    x: Any = None
    try:
        if "x" in exp:
            xs = _floats(exp["x"])
            x = xs[0] if layout_kind != TWO_LAYER and len(xs) == 1 else xs
        if layout_kind not in LAYOUT_KINDS:
            problems.append(f"[experiment] layout must be one of {', '.join(LAYOUT_KINDS)}")
        elif layout_kind == TWO_LAYER:
            if "hidden" not in exp:
                problems.append("two_layer layout needs [experiment] hidden")
            elif x is not None:
                layout = Layout.two_layer(len(x), int(exp["hidden"]))
        else:
            if "hidden" in exp:
                problems.append("[experiment] hidden is only valid for two_layer")
            layout = Layout(layout_kind)
    except (ValueError, LayoutError) as exc:
        problems.append(f"[experiment] {exc}")

    datum = None
    if x is not None and "y" in exp:
        try:
            datum = DataPoint(x, float(exp["y"]))
        except (ValueError, TypeError) as exc:
            problems.append(f"[experiment] bad datum: {exc}")

    fmt = exp.get("format", "both").strip()
    if fmt not in FORMATS:
        problems.append(f"[experiment] format must be one of {', '.join(FORMATS)}")

    spec = KIND_KEYS[kind]
    raw = dict(cp[kind]) if cp.has_section(kind) else {}
    params: dict[str, Any] = {}
    for key, text in raw.items():
        if key not in spec:
            problems.append(f"unknown key [{kind}] {key}")
            continue
        try:
            params[key] = _convert(key, text)
        except ValueError:
            problems.append(f"[{kind}] {key}: cannot parse {text!r}")
    req = [k for k, d in spec.items() if d is REQUIRED and k not in raw]
    if req:
        problems.append(f"missing required keys in [{kind}]: {', '.join(req)}")
    for key, default in spec.items():
        if key not in params and default is not REQUIRED:
            params[key] = default

    problems += _validate(kind, layout, datum, params)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(kind, datum, layout, params, exp.get("out"), fmt)


def _validate(kind, layout, datum, params) -> list[str]:
    out = []
    if kind in ("lipschitz_sweep", "surrogate_sweep"):
        if layout is not None and layout.kind != "one_neuron":
            out.append(f"{kind} runs on the one_neuron layout only")
        if datum is not None and datum.dim == 1 and (datum.x == 0.0 or datum.y == 0.0):
            out.append(f"{kind} needs x != 0 and y != 0 (precondition: otherwise the gradient does not jump across the kink)")
    if kind == "lipschitz_sweep":
        eps = params.get("epsilons", ())
        if not eps or any(e <= 1e-14 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            out.append("[lipschitz_sweep] epsilons must be strictly decreasing and > 1e-14")
    if kind == "surrogate_sweep":
        betas = params.get("betas", ())
        if not betas or any(b < 1 for b in betas) or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            out.append("[surrogate_sweep] betas must be strictly increasing and >= 1")
        if params.get("family") != "softplus":
            out.append("[surrogate_sweep] family must be softplus")
        if len(params.get("search_interval", ())) != 2:
            out.append("[surrogate_sweep] search_interval needs two numbers")
    if kind in ("rho_certificate", "trajectory_perturb"):
        eta = params.get("eta")
        if eta is not None and not (math.isfinite(eta) and eta > 0):
            out.append(f"[{kind}] eta must be positive")
        if params.get("region") not in REGION_KINDS:
            out.append(f"[{kind}] region must be one of {', '.join(REGION_KINDS)}")
        if params.get("region") == PATTERN_FIXED and not params.get("pattern"):
            out.append(f"[{kind}] pattern_fixed region needs a pattern")
        if not params.get("delta", 0) > 0:
            out.append(f"[{kind}] delta must be positive")
        if layout is not None:
            for key in ("center", "theta0", "theta0_prime"):
                v = params.get(key)
                if v is not None and len(v) != layout.size:
                    out.append(f"[{kind}] {key} needs {layout.size} entries, got {len(v)}")
    if kind == "trajectory_perturb":
        if params.get("policy") not in POLICIES:
            out.append(f"[trajectory_perturb] policy must be one of {', '.join(POLICIES)}")
        if params.get("steps", 0) < 0:
            out.append("[trajectory_perturb] steps must be nonnegative")
    return out
