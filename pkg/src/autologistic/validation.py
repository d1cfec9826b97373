"""Input validation and coercion helpers for the estimator API."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataValidationError
from .lattice import Ellipse, GridShape, NeighborhoodSpec, Rect
from .model import CovariateSeries

__all__ = [
    "check_field_series",
    "as_covariate_series",
    "as_neighborhood",
    "resolve_field",
]


def check_field_series(Z, n_sites: Optional[int] = None) -> np.ndarray:
    """Validate a (n_sites, T+1) binary series and return it as int8."""
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise DataValidationError(
            f"field series must be (n_sites, T+1) with T >= 1, got shape {Z.shape}"
        )
    if n_sites is not None and Z.shape[0] != n_sites:
        raise DataValidationError(f"field has {Z.shape[0]} sites, expected {n_sites}")
    if not np.isin(Z, (0, 1)).all():
        raise DataValidationError("field values must be 0 or 1")
    return Z.astype(np.int8)


def resolve_field(Z, shape: Optional[GridShape] = None) -> tuple[np.ndarray, GridShape]:
    """Accept either a flat (n_sites, T+1) series with an explicit shape or a
    (rows, cols, T+1) cube; return the flat series and the grid."""
    Z = np.asarray(Z)
    if Z.ndim == 3:
        if shape is None:
            shape = GridShape(Z.shape[0], Z.shape[1])
        elif (shape.rows, shape.cols) != Z.shape[:2]:
            raise DataValidationError(
                f"3-d field is {Z.shape[0]}x{Z.shape[1]} but shape says "
                f"{shape.rows}x{shape.cols}"
            )
        Z = Z.reshape(shape.n_sites, Z.shape[2])
    elif shape is None:
        raise DataValidationError("pass shape= when the field series is 2-d (n_sites, T+1)")
    return check_field_series(Z, shape.n_sites), shape


def as_covariate_series(
    X, n_sites: int, horizon: int, names: Optional[Sequence[str]] = None
) -> CovariateSeries:
    """Coerce None / 1-d / 2-d / 3-d arrays (or a CovariateSeries) to a
    validated :class:`CovariateSeries` covering t = 0..horizon."""
    if X is None:
        return CovariateSeries.none(n_sites, horizon)
    if isinstance(X, CovariateSeries):
        series = X
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            series = CovariateSeries(X[:, None], n_sites,
                                     names=names or ["x1"])
        elif X.ndim in (2, 3):
            series = CovariateSeries(X, n_sites, names=names)
        else:
            raise DataValidationError(
                "covariates must be a vector over time, (T+1, p), or (n, T+1, p)"
            )
    if series.n_sites != n_sites:
        raise DataValidationError(
            f"covariates have {series.n_sites} sites, expected {n_sites}"
        )
    if series.horizon < horizon:
        raise DataValidationError(
            f"covariates cover t=0..{series.horizon}, need t=0..{horizon}"
        )
    return series


def as_neighborhood(spec: Union[NeighborhoodSpec, dict, Sequence]) -> NeighborhoodSpec:
    """Accept a spec object or its config form {"rect": [v_r, v_c]} /
    {"ellipse": [a_r, a_c]} (or a ("rect", v_r, v_c) tuple)."""
    if isinstance(spec, (Rect, Ellipse)):
        return spec
    if isinstance(spec, dict):
        if len(spec) != 1:
            raise DataValidationError(f"ambiguous neighborhood config {spec!r}")
        kind, args = next(iter(spec.items()))
    elif isinstance(spec, (list, tuple)) and spec and isinstance(spec[0], str):
        kind, args = spec[0], spec[1:]
        if len(args) == 1 and isinstance(args[0], (list, tuple)):
            args = args[0]
    else:
        raise DataValidationError(f"cannot interpret neighborhood spec {spec!r}")
    kind = kind.lower()
    if len(args) != 2:
        raise DataValidationError(f"neighborhood {kind!r} needs two values, got {args!r}")
    if kind == "rect":
        return Rect(int(args[0]), int(args[1]))
    if kind == "ellipse":
        return Ellipse(float(args[0]), float(args[1]))
    raise DataValidationError(f"unknown neighborhood kind {kind!r}")
