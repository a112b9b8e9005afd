"""Structured text configs: the simulator setup and the path description.

Both use INI syntax. A generator config carries a ``[sim]`` section and
optionally a ``[path]`` section; data directories carry a standalone path
config so any command can re-parse run CSVs without the original generator
settings.
"""
from __future__ import annotations

import configparser
from pathlib import Path

from .dataset import FEATURE_SETS, PathSpec
from .errors import ConfigurationError
from .simulate import SimConfig

PATH_SPEC_FILENAME = "path_spec.cfg"


def _get(section, key, cast, default=None, where=""):
    if key not in section:
        if default is not None:
            return default
        raise ConfigurationError(f"missing field {key!r} in {where}")
    try:
        raw = section[key]
        if cast is bool:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError as exc:
        raise ConfigurationError(f"field {key!r} in {where}: cannot parse {section[key]!r}") from exc


def _read_ini(path: str | Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    found = parser.read(path, encoding="utf-8")
    if not found:
        raise ConfigurationError(f"config file {path} not found")
    return parser


def load_sim_config(path: str | Path) -> tuple[SimConfig, PathSpec]:
    """Parse a generator config; a missing [path] section gets defaults."""
    parser = _read_ini(path)
    if "sim" not in parser:
        raise ConfigurationError(f"{path}: missing [sim] section")
    sim = parser["sim"]
    where = f"[sim] of {path}"
    config = SimConfig(
        seed=_get(sim, "seed", int, where=where),
        n_segments=_get(sim, "n_segments", int, where=where),
        n_runs=_get(sim, "n_runs", int, where=where),
        segment_duration_range=(
            _get(sim, "segment_duration_min_s", float, 2.0, where),
            _get(sim, "segment_duration_max_s", float, 4.0, where),
        ),
        imu_rate=_get(sim, "imu_rate", float, 24.0, where),
        ambient_rate=_get(sim, "ambient_rate", float, 0.14, where),
        include_return_journey=_get(sim, "include_return_journey", bool, True, where),
        noise_scale=_get(sim, "noise_scale", float, 0.35, where),
        feature_set=_get(sim, "feature_set", str, "full_17", where),
    )
    if "path" in parser:
        p = parser["path"]
        where = f"[path] of {path}"
        path_id = _get(p, "path_id", str, "path_1", where)
        labels = _get(p, "segment_labels", str, "", where)
        if labels:
            segment_labels = tuple(s.strip() for s in labels.split(",") if s.strip())
        else:
            segment_labels = tuple(f"seg_{i}" for i in range(config.n_segments))
        spec = PathSpec(path_id, segment_labels, FEATURE_SETS[config.feature_set])
        if spec.n_segments != config.n_segments:
            raise ConfigurationError(
                f"field 'segment_labels' lists {spec.n_segments} labels but n_segments={config.n_segments}"
            )
    else:
        spec = PathSpec("path_1", tuple(f"seg_{i}" for i in range(config.n_segments)),
                        FEATURE_SETS[config.feature_set])
    return config, spec


def save_path_spec(spec: PathSpec, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser["path"] = {
        "path_id": spec.path_id,
        "segment_labels": ", ".join(spec.segment_labels),
        "feature_names": ", ".join(spec.feature_names),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        parser.write(fh)


def load_path_spec(path: str | Path) -> PathSpec:
    parser = _read_ini(path)
    if "path" not in parser:
        raise ConfigurationError(f"{path}: missing [path] section")
    p = parser["path"]
    where = f"[path] of {path}"
    labels = tuple(s.strip() for s in _get(p, "segment_labels", str, where=where).split(",") if s.strip())
    features = tuple(s.strip() for s in _get(p, "feature_names", str, where=where).split(",") if s.strip())
    return PathSpec(_get(p, "path_id", str, where=where), labels, features)


def find_path_spec(data_dir: str | Path) -> PathSpec:
    path = Path(data_dir) / PATH_SPEC_FILENAME
    if not path.exists():
        raise ConfigurationError(f"{data_dir} has no {PATH_SPEC_FILENAME}; generate data first")
    return load_path_spec(path)
