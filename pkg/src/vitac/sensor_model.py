"""Taxel response modeling, calibration fitting, and frame normalization.

The force-to-reading curve is piecewise: a linear ramp from zero up to the
start of the log-linear region, ``a*ln(F) + b`` between ``f_min`` and
``f_sat``, and a constant plateau past saturation. Readings are clamped to
the ADC range ``[0, r_max]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CalibrationMismatchError,
    DegenerateFitError,
    InsufficientDataError,
    InvalidInputError,
    SaturatedReadingError,
)

PAD_ROWS = 16
PAD_COLS = 16
PAD_SHAPE = (PAD_ROWS, PAD_COLS)


@dataclass(frozen=True)
class TaxelResponseModel:
    """Parameters of one taxel's force-to-reading curve.

    a: reading gain per ln(Newton), must be positive.
    b: reading offset in counts at 1 N.
    f_min/f_sat: bounds of the log-linear region in Newtons.
    r_max: largest representable reading (ADC full scale).
    """

    a: float = 100.0
    b: float = 50.0
    f_min: float = 1.0
    f_sat: float = 9.0
    r_max: int = 1023

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise InvalidInputError(f"slope a must be positive, got {self.a}")
        if not (np.isfinite(self.b)):
            raise InvalidInputError(f"offset b must be finite, got {self.b}")
        if not (0 < self.f_min < self.f_sat):
            raise InvalidInputError(
                f"need 0 < f_min < f_sat, got f_min={self.f_min}, f_sat={self.f_sat}"
            )
        if self.r_max <= 0:
            raise InvalidInputError(f"r_max must be positive, got {self.r_max}")

    @property
    def saturation_reading(self) -> float:
        """Plateau value: the (clamped) reading at and beyond f_sat."""
        return min(self.a * np.log(self.f_sat) + self.b, float(self.r_max))

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "f_min": self.f_min,
            "f_sat": self.f_sat,
            "r_max": self.r_max,
        }

    @staticmethod
    def from_dict(d: dict) -> "TaxelResponseModel":
        return TaxelResponseModel(
            a=float(d["a"]),
            b=float(d["b"]),
            f_min=float(d.get("f_min", 1.0)),
            f_sat=float(d.get("f_sat", 9.0)),
            r_max=int(d.get("r_max", 1023)),
        )


def force_to_reading(model: TaxelResponseModel, force) -> np.ndarray | float:
    """Reading (counts) for normal force in Newtons. Accepts scalars or arrays."""
    f = np.asarray(force, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("force must be finite")
    if np.any(f < 0):
        raise InvalidInputError("force must be nonnegative")
    r_low = model.a * np.log(model.f_min) + model.b
    with np.errstate(divide="ignore"):
        log_part = model.a * np.log(np.maximum(f, model.f_min)) + model.b
    ramp = np.where(f < model.f_min, f / model.f_min * r_low, log_part)
    r = np.where(f >= model.f_sat, model.a * np.log(model.f_sat) + model.b, ramp)
    r = np.clip(r, 0.0, float(model.r_max))
    return float(r) if np.isscalar(force) or np.ndim(force) == 0 else r


def reading_to_force(model: TaxelResponseModel, reading: float) -> float:
    """Inverse of force_to_reading below the saturation plateau.

    Raises SaturatedReadingError for readings at or above the plateau,
    where the inverse is not unique.
    """
    r = float(reading)
    if not np.isfinite(r) or r < 0 or r > model.r_max:
        raise InvalidInputError(f"reading {reading} outside [0, {model.r_max}]")
    if r >= model.saturation_reading:
        raise SaturatedReadingError(
            f"reading {r} is in the saturation plateau (>= {model.saturation_reading:.3f})"
        )
    r_low = model.a * np.log(model.f_min) + model.b
    if r >= r_low:
        return float(np.exp((r - model.b) / model.a))
    # ramp region; only reachable when r_low > 0
    return r * model.f_min / r_low


@dataclass(frozen=True)
class FitResult:
    model: TaxelResponseModel
    r_squared: float
    n_used: int


def fit_response(
    samples,
    f_min: float = 1.0,
    f_sat: float = 9.0,
    r_max: int = 1023,
) -> FitResult:
    """Least-squares fit of reading against ln(force) over the log-linear window.

    samples: iterable of (force_newton, reading_counts) pairs. Only samples
    with f_min <= force <= f_sat enter the fit.
    """
    pairs = [(float(f), float(r)) for f, r in samples]
    usable = [(f, r) for f, r in pairs if np.isfinite(f) and np.isfinite(r) and f_min <= f <= f_sat]
    if len(usable) < 2:
        raise InsufficientDataError(
            f"need >= 2 samples inside [{f_min}, {f_sat}] N, got {len(usable)}"
        )
    forces = np.array([f for f, _ in usable])
    readings = np.array([r for _, r in usable])
    if np.all(forces == forces[0]):
        raise DegenerateFitError("all usable forces identical; slope is unconstrained")
    design = np.column_stack([np.log(forces), np.ones_like(forces)])
    (a, b), *_ = np.linalg.lstsq(design, readings, rcond=None)
    if a <= 0:
        raise DegenerateFitError(f"fitted slope a={a:.4g} is not positive")
    residuals = readings - design @ np.array([a, b])
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((readings - readings.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    model = TaxelResponseModel(a=float(a), b=float(b), f_min=f_min, f_sat=f_sat, r_max=r_max)
    return FitResult(model=model, r_squared=r_squared, n_used=len(usable))


@dataclass(frozen=True, eq=False)
class TactileFrame:
    """One timestamped 16x16 reading grid from one sensor pad."""

    pad_id: int
    timestamp_us: int
    readings: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        r = np.asarray(self.readings)
        if r.shape != PAD_SHAPE:
            raise InvalidInputError(f"readings must be {PAD_SHAPE}, got {r.shape}")
        if self.normalized:
            r = r.astype(np.float64)
            if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
                raise InvalidInputError("normalized readings must lie in [0, 1]")
        else:
            if not np.all(np.isfinite(np.asarray(r, dtype=np.float64))):
                raise InvalidInputError("raw readings must be finite")
            if np.any(np.asarray(r, dtype=np.float64) % 1 != 0) or np.any(r < 0):
                raise InvalidInputError("raw readings must be nonnegative integers")
            r = r.astype(np.uint16)
        r.setflags(write=False)
        object.__setattr__(self, "readings", r)
        object.__setattr__(self, "pad_id", int(self.pad_id))
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))

    def values(self) -> np.ndarray:
        """Readings as float64, row-major grid."""
        return self.readings.astype(np.float64)


@dataclass(frozen=True, eq=False)
class PadCalibration:
    """Per-taxel gain/offset for one pad, plus its shared response model."""

    pad_id: int
    gain: np.ndarray = field(default_factory=lambda: np.ones(PAD_SHAPE))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(PAD_SHAPE))
    model: TaxelResponseModel = field(default_factory=TaxelResponseModel)

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=np.float64)
        offset = np.asarray(self.offset, dtype=np.float64)
        if gain.shape != PAD_SHAPE or offset.shape != PAD_SHAPE:
            raise InvalidInputError(f"gain/offset must be {PAD_SHAPE}")
        if not np.all(gain > 0):
            raise InvalidInputError("all gains must be positive")
        if not np.all(np.isfinite(offset)):
            raise InvalidInputError("offsets must be finite")
        gain.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "pad_id", int(self.pad_id))

    def to_dict(self) -> dict:
        return {
            "pad_id": self.pad_id,
            "gain": self.gain.tolist(),
            "offset": self.offset.tolist(),
            "model": self.model.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "PadCalibration":
        return PadCalibration(
            pad_id=int(d["pad_id"]),
            gain=np.asarray(d["gain"], dtype=np.float64),
            offset=np.asarray(d["offset"], dtype=np.float64),
            model=TaxelResponseModel.from_dict(d["model"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @staticmethod
    def load(path) -> "PadCalibration":
        with open(path) as fh:
            return PadCalibration.from_dict(json.load(fh))


def normalize_frame(calib: PadCalibration, frame: TactileFrame) -> TactileFrame:
    """Map a raw frame to per-taxel normalized readings in [0, 1]."""
    if frame.normalized:
        raise InvalidInputError("frame is already normalized")
    if calib.pad_id != frame.pad_id:
        raise CalibrationMismatchError(
            f"calibration pad {calib.pad_id} does not match frame pad {frame.pad_id}"
        )
    raw = frame.values()
    n = np.clip(calib.gain * (raw - calib.offset) / float(calib.model.r_max), 0.0, 1.0)
    return TactileFrame(frame.pad_id, frame.timestamp_us, n, normalized=True)


@dataclass(frozen=True, eq=False)
class ConsistencyReport:
    """Pad consistency statistics over 8x8 blocks of 2x2 taxels each."""

    block_sums: np.ndarray
    mean: float
    std: float
    outlier_count: int

    @property
    def coefficient_of_variation(self) -> float:
        return self.std / self.mean if self.mean != 0 else float("inf")


def consistency_stats(frame: TactileFrame, outlier_sigma: float = 3.0) -> ConsistencyReport:
    """Block sums over 2x2 taxel groups with two-pass outlier rejection.

    Pass 1 computes mean/std over all 64 sums; values beyond
    ``outlier_sigma`` standard deviations are flagged and excluded, then
    mean/std are recomputed over the rest.
    """
    grid = frame.values()
    sums = grid.reshape(8, 2, 8, 2).sum(axis=(1, 3))
    flat = sums.ravel()
    mean1 = float(flat.mean())
    std1 = float(flat.std())
    keep = np.abs(flat - mean1) <= outlier_sigma * std1
    outlier_count = int(np.count_nonzero(~keep))
    kept = flat[keep] if outlier_count else flat
    sums.setflags(write=False)
    return ConsistencyReport(
        block_sums=sums,
        mean=float(kept.mean()),
        std=float(kept.std()),
        outlier_count=outlier_count,
    )
