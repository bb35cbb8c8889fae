"""Closed-form synthetic series families.

Every series lives on an evenly spaced grid over ``[0, 1]`` (endpoints
inclusive) and is a deterministic function of a :class:`SeriesSpec`.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument

TWO_PI = 2.0 * np.pi


class FunctionFamily(str, enum.Enum):
    TREND = "Trend"
    SEASONALITY = "Seasonality"
    AMPLITUDE_SINE = "AmplitudeSine"
    BASELINE_SINE = "BaselineSine"
    TREND_SINE = "TrendSine"
    FULL_SINE = "FullSine"
    COMPOSITE_ADD = "CompositeAdd"
    COMPOSITE_SUB = "CompositeSub"
    COMPOSITE_MULT = "CompositeMult"


# parameters each family actually reads; the rest must sit at identity values
_USED = {
    FunctionFamily.TREND: {"M"},
    FunctionFamily.SEASONALITY: {"B"},
    FunctionFamily.AMPLITUDE_SINE: {"A"},
    FunctionFamily.BASELINE_SINE: {"C"},
    FunctionFamily.TREND_SINE: {"M"},
    FunctionFamily.FULL_SINE: {"A", "B", "C", "M"},
    FunctionFamily.COMPOSITE_ADD: {"B", "M"},
    FunctionFamily.COMPOSITE_SUB: {"B", "M"},
    FunctionFamily.COMPOSITE_MULT: {"B", "M"},
}
_IDENTITY = {"A": 1.0, "B": 1.0, "C": 0.0, "M": 0.0}


@dataclass(frozen=True)
class SeriesSpec:
    family: FunctionFamily
    A: float = 1.0
    B: float = 1.0
    C: float = 0.0
    M: float = 0.0
    n_samples: int = 1200
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "family", FunctionFamily(self.family))
        for name in "ABCM":
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))
        if self.n_samples < 2:
            raise InvalidArgument(f"n_samples must be >= 2, got {self.n_samples}")
        if self.domain[0] >= self.domain[1]:
            raise InvalidArgument(f"empty domain {self.domain}")
        for name, ident in _IDENTITY.items():
            if name not in _USED[self.family] and getattr(self, name) != ident:
                raise InvalidArgument(
                    f"{self.family.value} does not use {name}; it must stay at {ident}"
                )

    def to_record(self) -> dict:
        return {
            "family": self.family.value,
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "M": self.M,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SeriesSpec":
        return cls(
            family=FunctionFamily(rec["family"]),
            A=rec["A"],
            B=rec["B"],
            C=rec["C"],
            M=rec["M"],
            n_samples=int(rec["n_samples"]),
        )


@dataclass(frozen=True, eq=False)
class Series:
    spec: SeriesSpec
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def sample_grid(n_samples: int, domain: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Evenly spaced grid ``lo + i*(hi-lo)/(n-1)`` including both endpoints."""
    if n_samples < 2:
        raise InvalidArgument(f"n_samples must be >= 2, got {n_samples}")
    lo, hi = float(domain[0]), float(domain[1])
    i = np.arange(n_samples, dtype=np.float64)
    return lo + i * (hi - lo) / (n_samples - 1)


def linspace_params(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` evenly spaced parameter values over ``[lo, hi]``; ``n == 1`` gives ``[lo]``."""
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    if lo > hi:
        raise InvalidArgument(f"lo ({lo}) > hi ({hi})")
    if n == 1:
        return np.array([float(lo)])
    i = np.arange(n, dtype=np.float64)
    return float(lo) + i * (float(hi) - float(lo)) / (n - 1)


def _sine(freq, x):
    return np.sin(TWO_PI * freq * x)


def _trend(slope, x):
    return slope * x


def eval_function(spec: SeriesSpec, x):
    """Evaluate the closed form of ``spec`` at scalar or array ``x``."""
    x = np.asarray(x, dtype=np.float64)
    A, B, C, M = spec.A, spec.B, spec.C, spec.M
    fam = spec.family
    if fam is FunctionFamily.TREND:
        y = _trend(M, x)
    elif fam is FunctionFamily.SEASONALITY:
        y = _sine(B, x)
    elif fam is FunctionFamily.AMPLITUDE_SINE:
        y = A * _sine(1.0, x)
    elif fam is FunctionFamily.BASELINE_SINE:
        y = _sine(1.0, x) + C
    elif fam is FunctionFamily.TREND_SINE:
        y = _sine(1.0, x) + _trend(M, x)
    elif fam is FunctionFamily.FULL_SINE:
        y = A * _sine(B, x) + C + _trend(M, x)
    elif fam is FunctionFamily.COMPOSITE_ADD:
        y = _sine(B, x) + _trend(M, x)
    elif fam is FunctionFamily.COMPOSITE_SUB:
        y = _sine(B, x) - _trend(M, x)
    elif fam is FunctionFamily.COMPOSITE_MULT:
        y = _sine(B, x) * _trend(M, x)
    else:  # pragma: no cover - enum is closed
        raise InvalidArgument(f"unknown family {fam!r}")
    return float(y) if y.ndim == 0 else y


def generate_series(spec: SeriesSpec) -> Series:
    x = sample_grid(spec.n_samples, spec.domain)
    values = np.ascontiguousarray(eval_function(spec, x), dtype=np.float64)
    values.setflags(write=False)
    return Series(spec, values)


def write_series_csv(series: Series, path: str | Path) -> None:
    """Write ``index,x,value`` rows plus a ``.json`` sidecar holding the spec record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x = sample_grid(series.spec.n_samples, series.spec.domain)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "value"])
        for i, (xi, yi) in enumerate(zip(x.tolist(), series.values.tolist())):
            w.writerow([i, repr(xi), repr(yi)])
    path.with_suffix(".json").write_text(json.dumps(series.spec.to_record()) + "\n")


def read_series_csv(path: str | Path) -> Series:
    path = Path(path)
    spec = SeriesSpec.from_record(json.loads(path.with_suffix(".json").read_text()))
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    values = np.array([float(r["value"]) for r in rows])
    values.setflags(write=False)
    return Series(spec, values)
