"""Experiment configuration: a flat dataclass with nested dict fields, JSON round-trip
and environment overrides (prefix ``LAGMFG_``)."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

ENV_PREFIX = "LAGMFG_"


@dataclass
class ExperimentConfig:
    """Everything a CLI run needs.  Defaults are the documented values.

    game / params
        example name for ``build_example`` and its keyword parameters.
    grid
        number of time steps ``K``; ``None`` keeps the example's own default.
    initial
        starting moment path: ``{"kind": "zero"}``, ``{"kind": "constant", "value": v}``,
        ``{"kind": "y1", "sign": 1, "offset": 0.0}`` (two-well monotone solution) or
        ``{"kind": "radius", "r0": 0.5, "angle": 0.0}`` (rotation games).
    bump
        structural perturbation: ``target`` in {"psi", "L", "f0", "xbar"},
        ``radius`` of the bump support, optional ``center`` (defaults to the
        baseline terminal point of the first player).
    """

    game: str = "two_well"
    params: dict = field(default_factory=dict)
    grid: int | None = None
    seed: int = 0
    out: str = "out"
    tol: float = 1e-8
    max_iter: int = 500
    damping: float = 1.0
    adaptive: bool = True
    initial: dict = field(default_factory=lambda: {"kind": "zero"})
    # stability probes
    probes: int = 8
    epsilon: float = 1e-3
    probe_iter: int = 200
    # spectrum
    fd_step: float | None = None
    n_analytic: int = 5
    # multiplicity scan
    nu: float = 10.0
    scan_range: list = field(default_factory=lambda: [-2.0, 2.0])
    scan_points: list = field(default_factory=lambda: [101, 201, 401])
    # structural probes
    deltas: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    bump: dict = field(default_factory=lambda: {"target": "psi", "radius": 1.0})
    # oracle
    oracle_starts: int = 64
    oracle_K: int = 100

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def header(self) -> str:
        """The resolved config as ``#``-prefixed lines for artifact headers."""
        return "".join(f"# {line}\n" for line in json.dumps(self.to_dict(), sort_keys=True, indent=1).splitlines())


def parse_value(text: str):
    """JSON when it parses, the raw string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: ExperimentConfig, pairs: list[str] | None = None, environ=None) -> ExperimentConfig:
    """Apply ``LAGMFG_<FIELD>`` / ``LAGMFG_PARAM_<NAME>`` variables, then ``key=value`` pairs.

    Keys without a matching field go into ``params``.
    """
    data = cfg.to_dict()
    names = {f.name for f in fields(ExperimentConfig)}
    env = os.environ if environ is None else environ
    items = []
    for key in sorted(env):
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name.startswith("param_"):
            # game parameter names are case sensitive (T, K)
            items.append(("params." + key[len(ENV_PREFIX) + len("param_"):], env[key]))
        else:
            items.append((name, env[key]))
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not key=value")
        k, v = pair.split("=", 1)
        items.append((k.strip(), v))
    for k, v in items:
        val = parse_value(v)
        if k.startswith("params."):
            data["params"][k[len("params."):]] = val
        elif k.startswith("bump."):
            data["bump"][k[len("bump."):]] = val
        elif k.startswith("initial."):
            data["initial"][k[len("initial."):]] = val
        elif k in names:
            data[k] = val
        else:
            data["params"][k] = val
    return ExperimentConfig.from_dict(data)
