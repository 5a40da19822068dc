"""Per-grid-point z-score normalization of inputs and outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Grid points whose training values never vary keep unit scale.
_STD_FLOOR = 1e-10


@dataclass
class ZScore:
    mean: np.ndarray  # (N_T, channels)
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "ZScore":
        """Statistics over the sample axis of an (M, N_T, channels) array."""
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        std = np.where(std < _STD_FLOOR, 1.0, std)
        return cls(mean, std)

    @classmethod
    def identity(cls, n: int, channels: int) -> "ZScore":
        return cls(np.zeros((n, channels)), np.ones((n, channels)))

    def normalize(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean) / self.std

    def denormalize(self, data: np.ndarray) -> np.ndarray:
        return data * self.std + self.mean

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, blob: dict) -> "ZScore":
        return cls(np.asarray(blob["mean"], dtype=np.float64), np.asarray(blob["std"], dtype=np.float64))


@dataclass
class Normalizer:
    inputs: ZScore
    outputs: ZScore

    @classmethod
    def fit(cls, inputs: np.ndarray, outputs: np.ndarray, scheme: str = "zscore") -> "Normalizer":
        if scheme == "none":
            return cls(ZScore.identity(*inputs.shape[1:]), ZScore.identity(*outputs.shape[1:]))
        if scheme != "zscore":
            raise ValueError(f"unknown normalization {scheme!r}")
        return cls(ZScore.fit(inputs), ZScore.fit(outputs))

    def to_json(self) -> dict:
        return {"inputs": self.inputs.to_json(), "outputs": self.outputs.to_json()}

    @classmethod
    def from_json(cls, blob: dict) -> "Normalizer":
        return cls(ZScore.from_json(blob["inputs"]), ZScore.from_json(blob["outputs"]))
