"""Parcel features and the logistic local-potential model.

The local potential of a parcel is ``1 / (1 + exp(-(a0 + sum_k a_k * c_k)))``
over four features: ln(area in hectares), perimeter²/area, distance to the
city centre in km, and log-standardised POI density.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, ConfigError, SchemaError
from .geometry import compactness, distance_km

FEATURE_NAMES = ("size_ln", "compact", "center_km", "density_std")
SIZE_UNIT = "ln_hectares"


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FeatureVector:
    size_ln: float
    compact: float
    center_km: float
    density_std: float

    def __post_init__(self):
        for name in FEATURE_NAMES:
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = self.as_tuple()
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite feature in {vals}")
        if not 0.0 <= self.density_std <= 1.0:
            raise ValueError(f"density_std must lie in [0, 1], got {self.density_std}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.size_ln, self.compact, self.center_km, self.density_std)


@dataclass(frozen=True)
class Coefficients:
    a0: float = 2.224
    size_ln: float = -0.197
    compact: float = 1.933
    center_km: float = -0.101
    density_std: float = 2.230
    size_unit: str = SIZE_UNIT
    # fit diagnostics, absent for hand-specified coefficients
    converged: bool | None = field(default=None, compare=False)
    n_iter: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.vector()):
            raise ValueError("coefficients must be finite")
        if self.size_unit != SIZE_UNIT:
            raise ConfigError(f"coefficients use size unit {self.size_unit!r}; features use {SIZE_UNIT!r}")

    def vector(self) -> np.ndarray:
        """Intercept followed by the slopes in feature order."""
        return np.array([self.a0, self.size_ln, self.compact, self.center_km, self.density_std])

    @classmethod
    def from_vector(cls, v: Sequence[float], **kw) -> "Coefficients":
        return cls(*(float(x) for x in v), **kw)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("converged")
        d.pop("n_iter")
        return d


@dataclass(frozen=True)
class CalibrationSample:
    features: FeatureVector
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def standardize_density(raw: float, max_density: float) -> float:
    """log(raw)/log(max), with raw ≤ 1 mapped to 0 and the result clamped to [0, 1]."""
    if not max_density > 1:
        raise ConfigError(f"maximum density must exceed 1 for log standardisation, got {max_density}")
    if raw <= 1:
        return 0.0
    return min(math.log(raw) / math.log(max_density), 1.0)


def extract_features(parcel, city, max_density: float) -> FeatureVector:
    area_ha = parcel.area_m2 / 1e4
    return FeatureVector(
        size_ln=math.log(area_ha),
        compact=compactness(parcel.polygon),
        center_km=distance_km(parcel.centroid, city.center),
        density_std=standardize_density(parcel.raw_density, max_density),
    )


def sigmoid(z):
    """Logistic function that never overflows."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def local_potential(f: FeatureVector, w: Coefficients) -> float:
    z = w.a0 + w.size_ln * f.size_ln + w.compact * f.compact + w.center_km * f.center_km + w.density_std * f.density_std
    return float(sigmoid(z))


def design_matrix(features: Iterable[FeatureVector]) -> np.ndarray:
    rows = [f.as_tuple() for f in features]
    x = np.asarray(rows, dtype=float).reshape(-1, 4)
    return np.hstack([np.ones((len(x), 1)), x])


def local_potentials(features: Sequence[FeatureVector], w: Coefficients) -> np.ndarray:
    return sigmoid(design_matrix(features) @ w.vector())


def log_likelihood(beta, X: np.ndarray, y: np.ndarray) -> float:
    eta = X @ np.asarray(beta, dtype=float)
    # log(1 + e^eta) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def log_likelihood_gradient(beta, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return X.T @ (y - sigmoid(X @ np.asarray(beta, dtype=float)))


def irls(X: np.ndarray, y: np.ndarray, ridge: float = 0.0, tol: float = 1e-8, max_iter: int = 200):
    """Newton–Raphson (IRLS) on an arbitrary design ``X``; returns ``(beta, converged, n_iter)``."""
    p = X.shape[1]
    penalty = np.full(p, ridge)
    penalty[0] = 0.0  # intercept is never shrunk

    def objective(b):
        return log_likelihood(b, X, y) - 0.5 * float(np.sum(penalty * b * b))

    beta = np.zeros(p)
    best, best_obj = beta.copy(), objective(beta)
    for it in range(1, max_iter + 1):
        mu = sigmoid(X @ beta)
        w = mu * (1 - mu)
        grad = X.T @ (y - mu) - penalty * beta
        hess = (X * w[:, None]).T @ X + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return best, False, it
        # step halving keeps the objective monotone near separation
        t = 1.0
        cand = beta + step
        obj = objective(cand)
        while obj < best_obj - 1e-12 * abs(best_obj) and t > 1e-6:
            t /= 2
            cand = beta + t * step
            obj = objective(cand)
        delta = np.max(np.abs(cand - beta))
        beta = cand
        if obj >= best_obj:
            best, best_obj = beta.copy(), obj
        if not np.all(np.isfinite(beta)):
            return best, False, it
        if delta < tol:
            return beta, True, it
    return best, False, max_iter


def fit_logistic(
    samples: Sequence[CalibrationSample],
    *,
    ridge: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> Coefficients:
    """Maximum-likelihood logistic fit by iteratively reweighted least squares.

    Converges when the largest coefficient change drops below ``tol``. Under
    perfect separation the estimates diverge; the best iterate is returned
    with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    if not samples:
        raise CalibrationError("no calibration samples")
    X = design_matrix(s.features for s in samples)
    y = np.array([s.label for s in samples], dtype=float)
    return fit_logistic_arrays(X[:, 1:], y, ridge=ridge, tol=tol, max_iter=max_iter)


def fit_logistic_arrays(features: np.ndarray, labels: np.ndarray, *, ridge=0.0, tol=1e-8, max_iter=200) -> Coefficients:
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[1] != 4 or len(x) != len(y):
        raise CalibrationError(f"expected an (n, 4) feature array and n labels, got {x.shape} and {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise CalibrationError("labels must be 0 or 1")
    if y.min() == y.max():
        raise CalibrationError("need at least one sample of each label")
    const = [FEATURE_NAMES[k] for k in range(4) if np.ptp(x[:, k]) == 0]
    if const:
        raise CalibrationError(f"features constant across all samples: {', '.join(const)}")
    X = np.hstack([np.ones((len(x), 1)), x])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise CalibrationError("design matrix is rank deficient")
    beta, converged, n_iter = irls(X, y, ridge, tol, max_iter)
    if not converged:
        warnings.warn(
            f"logistic fit did not converge after {n_iter} iterations (possible separation)",
            ConvergenceWarning,
            stacklevel=2,
        )
    return Coefficients.from_vector(beta, converged=converged, n_iter=n_iter)


def classification_precision(w: Coefficients, samples: Sequence[CalibrationSample], cutoff: float = 0.5) -> float:
    if not samples:
        raise ValueError("precision of an empty sample set is undefined")
    p = local_potentials([s.features for s in samples], w)
    y = np.array([s.label for s in samples])
    return float(np.mean((p > cutoff).astype(int) == y))


def load_samples(path) -> list[CalibrationSample]:
    header = list(FEATURE_NAMES) + ["label"]
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise SchemaError(f"{path}: expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise SchemaError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[:4]]
                label = int(row[4])
                out.append(CalibrationSample(FeatureVector(*vals), label))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return out


def save_samples(samples: Iterable[CalibrationSample], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(FEATURE_NAMES) + ["label"])
        for s in samples:
            w.writerow([repr(v) for v in s.features.as_tuple()] + [int(s.label)])


def load_coefficients(path) -> Coefficients:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return Coefficients(**{k: data[k] for k in ("a0", *FEATURE_NAMES)}, size_unit=data.get("size_unit", SIZE_UNIT))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: malformed coefficients file ({exc})") from None


def save_coefficients(w: Coefficients, path) -> None:
    Path(path).write_text(json.dumps(w.to_json(), indent=2) + "\n", encoding="utf-8")
