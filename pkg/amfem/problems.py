# --------------------------------------------------
# problems.py
# --------------------------------------------------
# Builtin data functions and the manufactured smooth
# solution.
#
# Every data function takes an (N, 2) array of points
# and returns N values. With the solver's sign
# convention (<sigma, tau> = <u, div tau>, u = 0 on
# the boundary) the exact flux of a scalar potential
# u is sigma = -grad u.
# --------------------------------------------------

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

from .errors import ConfigError


def const1(points: np.ndarray) -> np.ndarray:
    return np.ones(len(points))


def sinsin(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


def linex(points: np.ndarray) -> np.ndarray:
    return np.asarray(points[:, 0], dtype=float).copy()


def signstep(points: np.ndarray) -> np.ndarray:
    return np.sign(points[:, 0] - 0.5)


BUILTIN_DATA = {
    "const1": const1,
    "sinsin": sinsin,
    "linex": linex,
    "signstep": signstep,
}


def sinsin_potential(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def sinsin_flux(points: np.ndarray) -> np.ndarray:
    """Exact sigma for `sinsin` data on the unit square."""
    x, y = points[:, 0], points[:, 1]
    return -np.pi * np.column_stack([
        np.cos(np.pi * x) * np.sin(np.pi * y),
        np.sin(np.pi * x) * np.cos(np.pi * y),
    ])


class TabulatedData:
    """
    Scattered samples (x, y, value) interpolated piecewise linearly; points
    outside the convex hull of the samples take the nearest sample value.
    """

    def __init__(self, points: np.ndarray, values: np.ndarray, source: str = "<memory>"):
        self.source = source
        self._linear = LinearNDInterpolator(points, values)
        self._nearest = NearestNDInterpolator(points, values)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        values = self._linear(points)
        outside = np.isnan(values)
        if outside.any():
            values[outside] = self._nearest(points[outside])
        return values

    @classmethod
    def from_csv(cls, path: str) -> "TabulatedData":
        rows = []
        try:
            with open(path, newline="") as fh:
                for row in csv.reader(fh):
                    if not row or row[0].strip().startswith("#"):
                        continue
                    try:
                        rows.append([float(v) for v in row[:3]])
                    except ValueError:
                        # header line
                        continue
        except OSError as exc:
            raise ConfigError(f"cannot read data file {path}: {exc}") from exc
        table = np.array(rows)
        if table.ndim != 2 or table.shape[0] < 3 or table.shape[1] != 3:
            raise ConfigError(f"data file {path} needs at least 3 rows of x, y, value")
        return cls(table[:, :2], table[:, 2], source=path)


def resolve_data(selector: str):
    """Builtin data function by name, otherwise a tabulated CSV path."""
    if selector in BUILTIN_DATA:
        return BUILTIN_DATA[selector]
    if Path(selector).is_file():
        return TabulatedData.from_csv(selector)
    raise ConfigError(
        f"unknown data {selector!r}: use one of {', '.join(BUILTIN_DATA)} or a CSV file of x,y,value"
    )
