"""Flat ``dotted.key = value`` run configuration.

Values are Python literals (numbers, bracket lists, tuples, strings, ``None``).
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .condense import CondensedQp, OcpSpec, condense
from .constants import ConfigurationError, ConstantsBundle, SamplerConfig
from .plant import LqrSolution, PlantModel, riccati_solve, steady_state_basis

_TUNING = {f.name for f in fields(ConstantsBundle)}
_REQUIRED = (
    "plant.A", "plant.B", "ocp.N", "ocp.Q", "ocp.R",
    "bounds.x_lower", "bounds.x_upper", "bounds.u_lower", "bounds.u_upper",
    "scenario.x0", "reference.segments",
)
_OPTIONAL = {
    "plant.basis_sign": 1,
    "ocp.C": None,
    "ocp.D": None,
    "simulation.steps": 60,
    "estimate.v_lower": None,
    "estimate.v_upper": None,
    "estimate.samples": 500,
    "seed": 0,
    "output.dir": "out",
}


def parse_text(text: str) -> dict:
    """Parse config text into ``{key: value}``; raises ``ConfigurationError``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        try:
            out[key] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigurationError(f"line {lineno}: cannot parse value for {key!r}: {exc}") from None
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = set(_REQUIRED) | set(_OPTIONAL) | {f"tuning.{k}" for k in _TUNING}
        unknown = sorted(set(self.values) - allowed)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in _REQUIRED if k not in self.values]
        if missing:
            raise ConfigurationError(f"missing config keys: {', '.join(missing)}")

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(parse_text(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    @classmethod
    def default(cls) -> "RunConfig":
        return cls.from_text(default_config_text())

    def get(self, key):
        if key in self.values:
            return self.values[key]
        if key.startswith("tuning."):
            return getattr(ConstantsBundle(), key.split(".", 1)[1])
        return _OPTIONAL[key]

    def with_values(self, **changes) -> "RunConfig":
        """Copy with dotted keys replaced; use ``__`` for the dot (``tuning__pi1=0.5``)."""
        vals = dict(self.values)
        vals.update({k.replace("__", "."): v for k, v in changes.items()})
        return RunConfig(vals)

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in self.values.items())

    # -- builders --------------------------------------------------------------

    def bundle(self) -> ConstantsBundle:
        kw = {k: self.get(f"tuning.{k}") for k in _TUNING}
        for k, v in kw.items():
            if k != "lambda_lower" and not isinstance(v, (int, float)):
                raise ConfigurationError(f"tuning.{k} must be a number")
        kw = {k: (float(v) if v is not None else None) for k, v in kw.items()}
        return ConstantsBundle(**kw)

    def build(self) -> "Problem":
        """Plant, Riccati solution, OCP and condensed QP.

        Raises ``ConfigurationError`` for malformed data and propagates
        ``RiccatiError`` for unstabilizable pairs.
        """
        try:
            model = PlantModel(np.asarray(self.get("plant.A"), dtype=float),
                               np.asarray(self.get("plant.B"), dtype=float))
            Q = np.atleast_2d(np.asarray(self.get("ocp.Q"), dtype=float))
            R = np.atleast_2d(np.asarray(self.get("ocp.R"), dtype=float))
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"bad plant or weight matrices: {exc}") from None
        for name, m in (("ocp.Q", Q), ("ocp.R", R)):
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T) or np.linalg.eigvalsh(m).min() <= 0:
                raise ConfigurationError(f"{name} must be symmetric positive definite")
        lqr = riccati_solve(model, Q, R)
        basis = steady_state_basis(model, sign=int(self.get("plant.basis_sign")))
        try:
            spec = OcpSpec.from_lqr(
                model, self.get("ocp.N"), Q, R, lqr, basis,
                (self.get("bounds.x_lower"), self.get("bounds.x_upper")),
                (self.get("bounds.u_lower"), self.get("bounds.u_upper")),
                C=self.get("ocp.C"), D=self.get("ocp.D"),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(str(exc)) from None
        return Problem(spec=spec, lqr=lqr, qp=condense(spec), bundle=self.bundle())

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.get("scenario.x0"), dtype=float)

    @property
    def segments(self) -> list:
        segs = self.get("reference.segments")
        try:
            return [(int(t), v) for t, v in segs]
        except (TypeError, ValueError):
            raise ConfigurationError("reference.segments must be a list of (t_start, v) pairs") from None

    @property
    def steps(self) -> int:
        return int(self.get("simulation.steps"))

    def reference_values(self) -> list:
        return [np.atleast_1d(np.asarray(v, dtype=float)) for _, v in self.segments]

    def sampler(self, samples=None, seed=None) -> SamplerConfig:
        vs = np.concatenate(self.reference_values())
        lo = self.get("estimate.v_lower")
        hi = self.get("estimate.v_upper")
        lo = float(vs.min()) if lo is None else float(lo)
        hi = float(vs.max()) if hi is None else float(hi)
        return SamplerConfig(
            v_lower=lo, v_upper=hi,
            samples=int(self.get("estimate.samples") if samples is None else samples),
            seed=int(self.get("seed") if seed is None else seed),
        )


@dataclass(frozen=True)
class Problem:
    spec: OcpSpec
    lqr: LqrSolution
    qp: CondensedQp
    bundle: ConstantsBundle


def default_config_text() -> str:
    return resources.files("cgmpc").joinpath("data/example.cfg").read_text(encoding="utf-8")


def default_config_path() -> Path:
    return Path(str(resources.files("cgmpc").joinpath("data/example.cfg")))
