"""Irradiance, dose accumulation, and coverage reporting.

Lamps are treated as point sources: irradiance on an upward-facing surface
is ``uvc_power / (4 pi r^2) * cos(theta)`` with theta the incidence angle
from the vertical. Louvered upper-room fixtures contribute nothing below
their mounting plane. Dose is irradiance integrated over lamp-on time
(J/m^2); one target dose of D90 inactivates 90% of the pathogen load, and
inactivation follows ``1 - 10^(-dose / d90)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .room import LampSpec, LampTier, Point3, RoomModel

DEFAULT_TARGET_DOSE = 27.0   # J/m^2 for one decade of inactivation
DEFAULT_GRID_ROWS = 8        # along the room length
DEFAULT_GRID_COLS = 6        # along the room width
MIN_SOURCE_DISTANCE = 0.01   # m; the point-source model diverges below this

LampOnIntervals = Dict[str, List[Tuple[float, float]]]


class DegenerateDistanceError(ValueError):
    """Evaluation point closer to a lamp than the point-source model allows."""


# ---------------------------------------------------------------------------
# core field evaluation
# ---------------------------------------------------------------------------

def irradiance_at_point(lamps: Iterable[LampSpec], point: Point3) -> float:
    """Total irradiance in W/m^2 on an upward-facing surface at ``point``."""
    total = 0.0
    for lamp in lamps:
        dx = lamp.position.x - point.x
        dy = lamp.position.y - point.y
        dz = lamp.position.z - point.z
        r_sq = dx * dx + dy * dy + dz * dz
        r = math.sqrt(r_sq)
        if r < MIN_SOURCE_DISTANCE:
            raise DegenerateDistanceError(
                f"point within {MIN_SOURCE_DISTANCE} m of lamp {lamp.id!r}")
        if lamp.tier is LampTier.UPPER_ROOM and point.z < lamp.position.z:
            continue  # louvers block all downward emission
        cos_incidence = dz / r
        if cos_incidence <= 0.0:
            continue
        total += lamp.uvc_power / (4.0 * math.pi * r_sq) * cos_incidence
    return total


def time_to_dose(irradiance: float, target_dose: float) -> float:
    """Seconds of exposure needed to reach ``target_dose``; inf if unreachable."""
    if target_dose <= 0.0:
        return 0.0
    if irradiance <= 0.0:
        return math.inf
    return target_dose / irradiance


def inactivation_fraction(dose: float, d90_dose: float) -> float:
    """Fraction of the pathogen load inactivated by ``dose``."""
    if d90_dose <= 0.0:
        raise ValueError("d90_dose must be > 0")
    if dose < 0.0:
        raise ValueError("dose must be >= 0")
    return 1.0 - 10.0 ** (-dose / d90_dose)


# ---------------------------------------------------------------------------
# dose grid
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DoseGrid:
    """Accumulated dose sampled at cell centers of a horizontal plane."""

    rows: int
    cols: int
    plane_height: float
    cell_centers: Tuple[Point3, ...]          # row-major, rows x cols
    accumulated_dose: np.ndarray              # shape (rows, cols), J/m^2
    target_dose: float = DEFAULT_TARGET_DOSE

    @classmethod
    def for_room(cls, room: RoomModel, rows: int = DEFAULT_GRID_ROWS,
                 cols: int = DEFAULT_GRID_COLS, plane_height: float = 0.0,
                 target_dose: float = DEFAULT_TARGET_DOSE) -> "DoseGrid":
        if rows < 1 or cols < 1:
            raise ValueError("grid must have at least one row and column")
        centers = []
        for r in range(rows):
            for c in range(cols):
                centers.append(Point3((c + 0.5) * room.width / cols,
                                      (r + 0.5) * room.length / rows,
                                      plane_height))
        return cls(rows=rows, cols=cols, plane_height=plane_height,
                   cell_centers=tuple(centers),
                   accumulated_dose=np.zeros((rows, cols)),
                   target_dose=target_dose)

    def copy(self) -> "DoseGrid":
        return DoseGrid(rows=self.rows, cols=self.cols,
                        plane_height=self.plane_height,
                        cell_centers=self.cell_centers,
                        accumulated_dose=self.accumulated_dose.copy(),
                        target_dose=self.target_dose)

    def cell_center(self, row: int, col: int) -> Point3:
        return self.cell_centers[row * self.cols + col]


def grid_irradiance(grid: DoseGrid, lamps: Sequence[LampSpec]) -> np.ndarray:
    """Irradiance at every cell center with the given lamps on."""
    field = np.empty((grid.rows, grid.cols))
    for r in range(grid.rows):
        for c in range(grid.cols):
            field[r, c] = irradiance_at_point(lamps, grid.cell_center(r, c))
    return field


def validate_intervals(intervals: LampOnIntervals) -> None:
    for lamp_id, spans in intervals.items():
        prev_end = -math.inf
        for start, end in spans:
            if end < start:
                raise ValueError(f"lamp {lamp_id!r}: interval end {end} "
                                 f"before start {start}")
            if start < prev_end:
                raise ValueError(f"lamp {lamp_id!r}: overlapping intervals")
            prev_end = end


def accumulate_dose(grid: DoseGrid, lamps: Sequence[LampSpec],
                    intervals: LampOnIntervals) -> DoseGrid:
    """Return a new grid with dose added for each lamp's on-intervals.

    Zero-length intervals contribute nothing; the result over an interval
    split at any point equals the result over the whole interval.
    """
    validate_intervals(intervals)
    by_id = {lamp.id: lamp for lamp in lamps}
    out = grid.copy()
    for lamp_id, spans in intervals.items():
        if lamp_id not in by_id:
            raise KeyError(f"unknown lamp id {lamp_id!r}")
        on_seconds = sum(end - start for start, end in spans)
        if on_seconds == 0.0:
            continue
        out.accumulated_dose += grid_irradiance(grid, [by_id[lamp_id]]) * on_seconds
    return out


# ---------------------------------------------------------------------------
# coverage reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellCoverage:
    row: int
    col: int
    x: float
    y: float
    irradiance: float
    time_to_target: float
    log_reduction: float


@dataclass(frozen=True)
class CoverageReport:
    """Per-cell disinfection outlook for a fixed cycle length.

    Cells that no lamp reaches are reported with infinite time-to-target
    and count as uncovered rather than as errors.
    """

    cycle_seconds: float
    target_dose: float
    cells: Tuple[CellCoverage, ...]
    min_time_to_target: float
    max_time_to_target: float
    mean_time_to_target: float
    covered_fraction: float


def coverage_report(grid: DoseGrid, lamps: Sequence[LampSpec],
                    cycle_seconds: float) -> CoverageReport:
    field = grid_irradiance(grid, lamps)
    cells = []
    times = []
    covered = 0
    for r in range(grid.rows):
        for c in range(grid.cols):
            e = float(field[r, c])   # plain float: these end up in CSV via repr
            t = time_to_dose(e, grid.target_dose)
            times.append(t)
            if t <= cycle_seconds:
                covered += 1
            center = grid.cell_center(r, c)
            cells.append(CellCoverage(
                row=r, col=c, x=center.x, y=center.y, irradiance=e,
                time_to_target=t,
                log_reduction=e * cycle_seconds / grid.target_dose))
    n = len(times)
    mean = sum(times) / n if all(math.isfinite(t) for t in times) else math.inf
    return CoverageReport(
        cycle_seconds=cycle_seconds, target_dose=grid.target_dose,
        cells=tuple(cells),
        min_time_to_target=min(times), max_time_to_target=max(times),
        mean_time_to_target=mean, covered_fraction=covered / n)


DOSE_MAP_HEADER = "row,col,x_m,y_m,irradiance_w_m2,time_to_target_s,log_reduction"


def write_dose_map_csv(cells: Sequence[CellCoverage], stream) -> None:
    """Write per-cell rows in the dose-map CSV layout (full float precision)."""
    stream.write(DOSE_MAP_HEADER + "\n")
    for cell in cells:
        stream.write(f"{cell.row},{cell.col},{cell.x!r},{cell.y!r},"
                     f"{cell.irradiance!r},{cell.time_to_target!r},"
                     f"{cell.log_reduction!r}\n")
