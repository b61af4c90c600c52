"""Observed-sample container shared by every estimation module."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch


def _block(values, n: int, name: str) -> np.ndarray:
    if values is None:
        return np.zeros((n, 0))
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise DimensionMismatch(f"column block {name!r} has shape {arr.shape}, expected ({n}, k)")
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed rows ``(y, a, z, w, x)``.

    ``z`` is the treatment-inducing proxy, ``w`` the outcome-inducing proxy
    and ``x`` the measured covariates (possibly zero columns).
    """

    y: np.ndarray
    a: np.ndarray
    z: np.ndarray
    w: np.ndarray
    x: np.ndarray = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float).ravel()
        n = y.shape[0]
        if a.shape[0] != n:
            raise DimensionMismatch("y and a have different lengths")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        for name in ("z", "w", "x"):
            object.__setattr__(self, name, _block(getattr(self, name), n, name))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        """Column counts ``(p, q, r)`` of ``z``, ``w`` and ``x``."""
        return self.z.shape[1], self.w.shape[1], self.x.shape[1]

    def awx(self) -> np.ndarray:
        return np.column_stack([self.a, self.w, self.x])

    def azx(self) -> np.ndarray:
        return np.column_stack([self.a, self.z, self.x])

    def wx(self) -> np.ndarray:
        return np.column_stack([self.w, self.x])

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.y[idx], self.a[idx], self.z[idx], self.w[idx], self.x[idx])

    def with_columns(self, **blocks) -> "Dataset":
        return replace(self, **blocks)

    def equals(self, other: "Dataset") -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("y", "a", "z", "w", "x")
        )
