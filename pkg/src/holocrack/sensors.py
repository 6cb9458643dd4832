"""Strain sensor arrays and their JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .elastic import ElasticMaterial, StrainTensor

SENSOR_SCHEMA = "holocrack.sensor_array/1"


@dataclass
class SensorArray:
    """Sensor locations and the in-plane strain tensor measured at each.

    ``strains`` has shape ``(n_s, 3)`` holding ``(exx, eyy, exy)`` per sensor.
    """

    locations: np.ndarray
    strains: np.ndarray
    material: Optional[ElasticMaterial] = None
    half_side: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=complex).ravel()
        self.strains = np.asarray(self.strains, dtype=float).reshape(-1, 3)
        if len(self.locations) == 0:
            raise ValueError("a sensor array needs at least one sensor")
        if len(self.locations) != len(self.strains):
            raise ValueError("locations and strains differ in length")
        if len(np.unique(self.locations)) != len(self.locations):
            raise ValueError("sensor locations must be pairwise distinct")

    def __len__(self):
        return len(self.locations)

    @property
    def tensors(self) -> StrainTensor:
        return StrainTensor.from_array(self.strains)

    def to_dict(self) -> dict:
        return {
            "schema": SENSOR_SCHEMA,
            "material": self.material.to_dict() if self.material else None,
            "half_side": self.half_side,
            "sensors": [
                {"x": float(z.real), "y": float(z.imag), "exx": float(e[0]), "eyy": float(e[1]), "exy": float(e[2])}
                for z, e in zip(self.locations, self.strains)
            ],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SensorArray":
        if data.get("schema") != SENSOR_SCHEMA:
            raise ValueError(f"unexpected schema {data.get('schema')!r}")
        sensors = data["sensors"]
        return cls(
            locations=[complex(s["x"], s["y"]) for s in sensors],
            strains=[[s["exx"], s["eyy"], s["exy"]] for s in sensors],
            material=ElasticMaterial.from_dict(data["material"]) if data.get("material") else None,
            half_side=data.get("half_side"),
            provenance=data.get("provenance", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SensorArray":
        return cls.from_dict(json.loads(Path(path).read_text()))
