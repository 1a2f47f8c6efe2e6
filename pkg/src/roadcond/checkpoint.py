"""Versioned JSON checkpoint container.

Stores layer shapes plus flat parameter data, model config, and the fitted
feature-encoding state needed to re-encode new data identically. Floats are
serialized with json's shortest-round-trip repr, so save -> load is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Encoders
from .errors import InvalidConfig

FORMAT_NAME = "roadcond-checkpoint"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    config: dict
    arrays: dict[str, np.ndarray]
    encoders: Encoders | None = None
    traffic_stats: tuple[float, float] | None = None
    feature_columns: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "config": self.config,
            "feature_columns": list(self.feature_columns),
            "extra": self.extra,
            "arrays": {
                name: {
                    "shape": list(arr.shape),
                    "data": [float(x) for x in np.asarray(arr, dtype=np.float64).ravel()],
                }
                for name, arr in self.arrays.items()
            },
        }
        if self.encoders is not None:
            payload["encoders"] = {
                "pavement_types": list(self.encoders.pavement_types),
                "functional_classes": list(self.encoders.functional_classes),
            }
        if self.traffic_stats is not None:
            payload["traffic_stats"] = [float(x) for x in self.traffic_stats]
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        payload = json.loads(text)
        if payload.get("format") != FORMAT_NAME:
            raise InvalidConfig(f"not a {FORMAT_NAME} file")
        if payload.get("version") != FORMAT_VERSION:
            raise InvalidConfig(f"unsupported checkpoint version {payload.get('version')}")
        arrays = {
            name: np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
            for name, spec in payload["arrays"].items()
        }
        encoders = None
        if "encoders" in payload:
            encoders = Encoders(
                pavement_types=tuple(int(c) for c in payload["encoders"]["pavement_types"]),
                functional_classes=tuple(payload["encoders"]["functional_classes"]),
            )
        stats = payload.get("traffic_stats")
        return cls(
            kind=payload["kind"],
            config=payload["config"],
            arrays=arrays,
            encoders=encoders,
            traffic_stats=tuple(stats) if stats is not None else None,
            feature_columns=tuple(payload.get("feature_columns", ())),
            extra=payload.get("extra", {}),
        )


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_text(ckpt.to_json(), encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    return Checkpoint.from_json(Path(path).read_text(encoding="utf-8"))
