"""Scenario documents: parsing, defaults, canonical serialisation."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catching_up import EPS_CONV, K_CAP
from .convex_geometry import EPS_PROJ
from .errors import InputError
from .foliation import (ConvexFoliation, ParametricFamily, make_parametric_foliation,
                        make_sublevel_foliation)
from .functions import REGISTRY, make_function
from .trajectory_analysis import H_FD

DEFAULT_SCHEDULE = [8, 16, 32, 64, 128, 256, 512, 1024]
DEFAULT_ANALYSIS = {
    "n_samples": 1001,
    "n_triples": 1000,
    "inclusion_samples": 256,
    "windows": [1e-2, 1e-3],
    "reference": False,
    "reference_step": 1e-3,
    "k_cap": K_CAP,
}


class ScenarioError(InputError):
    """Unparseable or invalid scenario; ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


@dataclass
class Scenario:
    dimension: int
    foliation: dict
    x0: list
    t_range: list
    sizes: list = field(default_factory=lambda: list(DEFAULT_SCHEDULE))
    scheme: str = "uniform"
    tolerances: dict = field(default_factory=lambda: {
        "eps_proj": EPS_PROJ, "eps_conv": EPS_CONV, "h_fd": H_FD})
    seed: int = 0
    analysis: dict = field(default_factory=lambda: dict(DEFAULT_ANALYSIS))
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        for key in ("dimension", "foliation", "x0", "t_range"):
            if key not in d:
                raise ScenarioError(f"missing required field {key!r}", field=key)
        dim = d["dimension"]
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise ScenarioError("dimension must be an integer >= 1", field="dimension")
        x0 = d["x0"]
        if (not isinstance(x0, list) or len(x0) != dim
                or not all(_is_number(v) for v in x0) or not np.all(np.isfinite(x0))):
            raise ScenarioError(f"x0 must be a list of {dim} finite numbers", field="x0")
        tr = d["t_range"]
        if not (isinstance(tr, list) and len(tr) == 2 and all(_is_number(v) for v in tr)):
            raise ScenarioError("t_range must be [a, b]", field="t_range")
        if not tr[0] < tr[1]:
            raise ScenarioError("t_range must satisfy a < b", field="t_range")
        fol = d["foliation"]
        if not (isinstance(fol, dict) and len(fol) == 1 and next(iter(fol)) in ("sublevel", "parametric")):
            raise ScenarioError("foliation must be {'sublevel': ...} or {'parametric': ...}",
                                field="foliation")
        if "sublevel" in fol:
            spec = fol["sublevel"]
            if not isinstance(spec, dict) or spec.get("name") not in REGISTRY:
                raise ScenarioError(f"foliation.sublevel.name must be one of {sorted(REGISTRY)}",
                                    field="foliation.sublevel.name")
            fol = {"sublevel": {"name": spec["name"], "params": dict(spec.get("params", {}))}}
        else:
            spec = fol["parametric"]
            if not isinstance(spec, dict) or spec.get("kind") not in ("ball", "ellipsoid", "box"):
                raise ScenarioError("foliation.parametric.kind must be ball, ellipsoid or box",
                                    field="foliation.parametric.kind")
        sched = d.get("schedule", {})
        sizes = sched.get("sizes", list(DEFAULT_SCHEDULE))
        if (not isinstance(sizes, list) or not sizes
                or not all(isinstance(n, int) and n >= 1 for n in sizes)
                or any(q <= p for p, q in zip(sizes[:-1], sizes[1:]))):
            raise ScenarioError("schedule.sizes must be a strictly increasing list of positive integers",
                                field="schedule.sizes")
        scheme = sched.get("scheme", "uniform")
        if scheme not in ("uniform", "geometric"):
            raise ScenarioError("schedule.scheme must be uniform or geometric", field="schedule.scheme")
        tol = {"eps_proj": EPS_PROJ, "eps_conv": EPS_CONV, "h_fd": H_FD}
        for k, v in d.get("tolerances", {}).items():
            if k not in tol or not _is_number(v) or not v > 0:
                raise ScenarioError(f"bad tolerance {k!r}", field=f"tolerances.{k}")
            tol[k] = float(v)
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ScenarioError("seed must be an integer", field="seed")
        analysis = dict(DEFAULT_ANALYSIS)
        for k, v in d.get("analysis", {}).items():
            if k not in analysis:
                raise ScenarioError(f"unknown analysis option {k!r}", field=f"analysis.{k}")
            analysis[k] = v
        return cls(dim, copy.deepcopy(fol), [float(v) for v in x0], [float(v) for v in tr],
                   list(sizes), scheme, tol, seed, analysis, str(d.get("name", "")))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dimension": self.dimension,
            "foliation": copy.deepcopy(self.foliation),
            "x0": list(self.x0),
            "t_range": list(self.t_range),
            "schedule": {"sizes": list(self.sizes), "scheme": self.scheme},
            "tolerances": dict(self.tolerances),
            "seed": self.seed,
            "analysis": dict(self.analysis),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def function(self):
        if "sublevel" not in self.foliation:
            return None
        spec = self.foliation["sublevel"]
        return make_function(spec["name"], self.dimension, spec["params"])

    def build_foliation(self, validate: bool = True) -> ConvexFoliation:
        a, b = self.t_range
        try:
            if "sublevel" in self.foliation:
                return make_sublevel_foliation(self.function(), a, b, validate=validate,
                                               seed=self.seed,
                                               eps_proj=self.tolerances["eps_proj"])
            spec = dict(self.foliation["parametric"])
            fam = ParametricFamily(spec.pop("kind"), spec)
            if fam.dim() != self.dimension:
                raise ScenarioError("parametric family dimension does not match 'dimension'",
                                    field="foliation.parametric")
            return make_parametric_foliation(fam, a, b, validate=validate)
        except KeyError as err:
            raise ScenarioError(f"foliation is missing parameter {err}", field="foliation") from err


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: JSON parse error at line {err.lineno}, column {err.colno}: "
                            f"{err.msg}", line=err.lineno) from err
    return Scenario.from_dict(data)


def shipped_scenarios() -> dict:
    """Name -> path of the scenarios bundled with the package."""
    root = Path(__file__).with_name("scenarios")
    return {p.stem: p for p in sorted(root.glob("*.json"))}
