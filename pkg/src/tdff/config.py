"""Pipeline configuration loaded from a single YAML document.

Example::

    metadata: data/metadata.csv
    streams:
      - {name: R, dim: 2048, path: data/resnext.tdff}
      - {name: G, dim: 1024, path: data/googlenet.tdff}
    work_dir: out
    solver: {C: 10.0, tolerance: 1.0e-4, max_iterations: 1000, seed: 0}
    fusion: {beta: 0.0}
    far_targets: [0.001, 0.01, 0.1]
    fpir_targets: [0.01, 0.1]
    ranks: [1, 5, 10]

Relative paths are resolved against the directory holding the config file.
An optional ``synthetic`` mapping (fields of ``SyntheticSpec``) makes the
``synth`` and ``run`` commands generate the inputs first.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .fusion import FeatureStreamSpec
from .scoring import FusionConfig
from .svm import SolverConfig
from .synth import SyntheticSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StreamInput:
    name: str
    dim: int
    path: Path


@dataclass(frozen=True)
class PipelineConfig:
    metadata: Path
    streams: tuple[StreamInput, ...]
    work_dir: Path
    solver: SolverConfig = SolverConfig()
    fusion: FusionConfig = FusionConfig()
    far_targets: tuple[float, ...] = (0.001, 0.01, 0.1)
    fpir_targets: tuple[float, ...] = (0.01, 0.1)
    ranks: tuple[int, ...] = (1, 5, 10)
    pairs: Path | None = None
    synthetic: SyntheticSpec | None = None
    threads: int | None = None
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.streams:
            raise ConfigError("at least one feature stream is required")
        if any(r < 1 for r in self.ranks):
            raise ConfigError("ranks must be >= 1")
        for f in (*self.far_targets, *self.fpir_targets):
            if not 0.0 < f <= 1.0:
                raise ConfigError(f"rate targets must lie in (0, 1], got {f}")

    @property
    def stream_spec(self) -> FeatureStreamSpec:
        return FeatureStreamSpec(tuple((s.name, s.dim) for s in self.streams))


def _build(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: dict, base: os.PathLike = ".") -> PipelineConfig:
    base = Path(base)
    known = {f.name for f in dataclasses.fields(PipelineConfig)} - {"source"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("metadata", "streams", "work_dir"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    def path(p):
        return None if p is None else (base / Path(p))

    streams = []
    for i, s in enumerate(raw["streams"]):
        try:
            streams.append(StreamInput(str(s["name"]), int(s["dim"]), path(s["path"])))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"stream {i} needs name, dim and path: {exc}") from None
    synthetic = raw.get("synthetic")
    if synthetic is not None:
        synthetic = dict(synthetic)
        if "stream_dims" in synthetic and synthetic["stream_dims"] is not None:
            synthetic["stream_dims"] = tuple(synthetic["stream_dims"])
        synthetic = _build(SyntheticSpec, synthetic, "synthetic")
    return PipelineConfig(
        metadata=path(raw["metadata"]),
        streams=tuple(streams),
        work_dir=path(raw["work_dir"]),
        solver=_build(SolverConfig, raw.get("solver"), "solver"),
        fusion=_build(FusionConfig, raw.get("fusion"), "fusion"),
        far_targets=tuple(float(f) for f in raw.get("far_targets", PipelineConfig.far_targets)),
        fpir_targets=tuple(float(f) for f in raw.get("fpir_targets", PipelineConfig.fpir_targets)),
        ranks=tuple(int(r) for r in raw.get("ranks", PipelineConfig.ranks)),
        pairs=path(raw.get("pairs")),
        synthetic=synthetic,
        threads=raw.get("threads"),
        source=base,
    )


def load_config(path: os.PathLike) -> PipelineConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw, path.parent)


def synthetic_config(spec: SyntheticSpec, root: os.PathLike, **overrides) -> PipelineConfig:
    """Config for a synthetic dataset laid out under ``root``."""
    root = Path(root)
    streams = tuple(StreamInput(n, d, root / "data" / f"{n}.tdff")
                    for n, d in zip(spec.stream_names(), spec.streams))
    kwargs = dict(metadata=root / "data" / "metadata.csv", streams=streams, work_dir=root / "out",
                  synthetic=spec, source=root)
    kwargs.update(overrides)
    return PipelineConfig(**kwargs)
