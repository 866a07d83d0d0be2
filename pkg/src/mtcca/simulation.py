"""Synthetic data models with known dependency structure."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .moments import PairedSample


class ModelName(str, enum.Enum):
    EXAMPLE1 = "example1"
    EXAMPLE2 = "example2"
    INDEPENDENT_NULL = "null"


@dataclass(frozen=True)
class SimulationModel:
    name: ModelName
    n_samples: int = 1000
    seed: int = 0
    noise_scale: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "name", ModelName(self.name))
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")


# population canonical directions, keyed by order
TRUE_DIRECTIONS: Dict[ModelName, Dict[int, tuple]] = {
    ModelName.EXAMPLE1: {
        1: (np.array([1.0, 0.0]), np.array([1.0, 0.0])),
    },
    ModelName.EXAMPLE2: {
        1: (np.array([1.0, 0.5, 0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])),
        2: (np.array([0.0, 0.0, 1.0, 0.75, 0.5]), np.array([0.0, 1.0, 0.0])),
    },
    ModelName.INDEPENDENT_NULL: {},
}


def generate(model: SimulationModel, rng: Optional[np.random.Generator] = None) -> PairedSample:
    """Draw ``model.n_samples`` joint observations.

    example1: ``Y1 = cos(X1) + 0.1 W`` with X1, X2, Y2, W independent N(0, 1).
    example2: ``Y1 = X1 + 0.5 X2 + 0.1 W1``,
    ``Y2 = cos(X3 + 0.75 X4 + 0.5 X5) + 0.1 W2``, X, W, Y3 independent N(0, 1).
    null: X (2-d) and Y (2-d) independent N(0, I).
    """
    if rng is None:
        rng = np.random.default_rng(model.seed)
    n, c = model.n_samples, model.noise_scale
    if model.name is ModelName.EXAMPLE1:
        x = rng.standard_normal((n, 2))
        y2 = rng.standard_normal(n)
        w = rng.standard_normal(n)
        y = np.column_stack([np.cos(x[:, 0]) + c * w, y2])
    elif model.name is ModelName.EXAMPLE2:
        x = rng.standard_normal((n, 5))
        w = rng.standard_normal((n, 2))
        y3 = rng.standard_normal(n)
        y1 = x[:, 0] + 0.5 * x[:, 1] + c * w[:, 0]
        y2 = np.cos(x[:, 2] + 0.75 * x[:, 3] + 0.5 * x[:, 4]) + c * w[:, 1]
        y = np.column_stack([y1, y2, y3])
    else:
        x = rng.standard_normal((n, 2))
        y = rng.standard_normal((n, 2))
    return PairedSample(x, y)
