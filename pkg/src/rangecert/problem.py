"""Problem instances for range-only trajectory estimation.

A problem bundles the anchor set, the timestamped distance measurements and
the noise model. Instances are immutable after construction and safe to share
across concurrent solver restarts.

File formats (UTF-8, comma separated, ``#`` starts a comment line):

* ``anchors.csv``        header ``id,x,y[,z]``, one row per anchor.
* ``measurements.csv``   header ``t,anchor_id,distance``; rows ideally sorted
  by ``t`` but unsorted input is accepted and stably sorted.
* ``ground_truth.csv``   header ``t,x,y[,z]``.

Raw files store plain distances. Squaring happens inside the measurement
model, never at ingestion time.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SQUARED_CONSTANT = "squared-constant"
PROPAGATED = "propagated"

#: absolute tolerance used to group rows sharing a timestamp
GROUP_TOLERANCE = 1e-9


class DatasetError(ValueError):
    """Base class for ingestion and validation failures."""


class ParseError(DatasetError):
    """A row of an input file could not be parsed."""

    def __init__(self, path: str | Path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class UnknownAnchorError(DatasetError):
    """A measurement row references an anchor id that was never declared."""


class DuplicateMeasurementError(DatasetError):
    """The same (time index, anchor) pair appears more than once."""


class OrderingError(DatasetError):
    """Timestamps are not strictly increasing after grouping."""


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Fixed beacons with known positions.

    ``coordinates`` holds one anchor per column (shape ``(D, M)``), matching
    the per-time anchor matrices used by the measurement model.
    """

    coordinates: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coordinates, dtype=float)
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        if coords.ndim != 2:
            raise ValueError("anchor coordinates must be a (D, M) matrix")
        if coords.shape[0] not in (2, 3):
            raise ValueError(f"anchor dimension must be 2 or 3, got {coords.shape[0]}")
        if coords.shape[1] < 1:
            raise ValueError("need at least one anchor")
        if not np.all(np.isfinite(coords)):
            raise ValueError("anchor coordinates must be finite")
        if len(self.ids) != coords.shape[1]:
            raise ValueError("number of ids must match number of anchor columns")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("anchor ids must be unique")

    @property
    def dim(self) -> int:
        return self.coordinates.shape[0]

    @property
    def count(self) -> int:
        return self.coordinates.shape[1]

    def norms_squared(self) -> np.ndarray:
        """Per-anchor squared norms, shape ``(M,)``."""
        return np.sum(self.coordinates**2, axis=0)


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Sparse distance measurements in a block-compressed layout.

    Rows belonging to time index ``n`` occupy the slice
    ``offsets[n]:offsets[n+1]`` of ``anchor_index`` and ``distance``.
    """

    times: np.ndarray
    anchor_index: np.ndarray
    distance: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        aidx = np.ascontiguousarray(self.anchor_index, dtype=np.int64)
        dist = np.ascontiguousarray(self.distance, dtype=float)
        offs = np.ascontiguousarray(self.offsets, dtype=np.int64)
        for name, value in (("times", times), ("anchor_index", aidx),
                            ("distance", dist), ("offsets", offs)):
            object.__setattr__(self, name, value)
        n = times.shape[0]
        if n < 1:
            raise ValueError("need at least one measurement time")
        if np.any(np.diff(times) <= 0):
            raise OrderingError("grouped timestamps must be strictly increasing")
        if offs.shape != (n + 1,) or offs[0] != 0 or offs[-1] != dist.shape[0]:
            raise ValueError("offsets must span the measurement rows")
        counts = np.diff(offs)
        if np.any(counts < 1):
            raise ValueError("every time index needs at least one measurement")
        if dist.shape != aidx.shape:
            raise ValueError("distance and anchor_index lengths differ")
        if dist.shape[0] < 1:
            raise ValueError("need at least one measurement")
        if not np.all(np.isfinite(dist)) or np.any(dist < 0):
            raise ValueError("distances must be finite and nonnegative")
        self._check_duplicates(aidx, counts)

    @staticmethod
    def _check_duplicates(aidx: np.ndarray, counts: np.ndarray) -> None:
        row_time = np.repeat(np.arange(counts.shape[0]), counts)
        keys = row_time * (aidx.max() + 1) + aidx
        uniq, first = np.unique(keys, return_index=True)
        if uniq.shape[0] != keys.shape[0]:
            dup = np.setdiff1d(np.arange(keys.shape[0]), first)[0]
            raise DuplicateMeasurementError(
                f"anchor {aidx[dup]} measured twice at time index {row_time[dup]}"
            )

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    @property
    def total(self) -> int:
        """Total number of measurement rows E."""
        return self.distance.shape[0]

    def counts(self) -> np.ndarray:
        """Number of rows per time index, shape ``(N,)``."""
        return np.diff(self.offsets)

    def row_time_index(self) -> np.ndarray:
        """Time index of every measurement row, shape ``(E,)``."""
        return np.repeat(np.arange(self.n_times), self.counts())

    def observations(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Anchor indices and raw distances observed at time index ``n``."""
        lo, hi = self.offsets[n], self.offsets[n + 1]
        return self.anchor_index[lo:hi], self.distance[lo:hi]

    @classmethod
    def from_rows(cls, times: np.ndarray, anchor_index: np.ndarray,
                  distance: np.ndarray) -> "MeasurementSet":
        """Group per-row timestamps into time indices.

        Rows are stably sorted by timestamp; rows within ``GROUP_TOLERANCE``
        of the first timestamp of the current group share a time index.
        """
        times = np.asarray(times, dtype=float)
        anchor_index = np.asarray(anchor_index, dtype=np.int64)
        distance = np.asarray(distance, dtype=float)
        order = np.argsort(times, kind="stable")
        times, anchor_index, distance = times[order], anchor_index[order], distance[order]
        grouped: list[float] = []
        offsets = [0]
        for i, t in enumerate(times):
            if not grouped or t - grouped[-1] > GROUP_TOLERANCE:
                grouped.append(float(t))
                offsets.append(i)
        offsets = np.asarray(offsets[1:] + [times.shape[0]], dtype=np.int64)
        return cls(np.asarray(grouped), anchor_index, distance, offsets)


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise description.

    ``sigma_d`` is the standard deviation of the additive noise on the raw
    distances. Because the cost operates on squared distances, the weighting
    covariance needs a policy:

    * ``squared-constant``: every squared-domain residual gets the same
      variance ``sigma_sq**2`` (``sigma_sq`` defaults to ``sigma_d``).
    * ``propagated``: first-order propagation, variance ``4 * d**2 * sigma_d**2``
      per row; rows with zero measured distance fall back to the
      squared-constant entry and raise a warning flag.
    """

    sigma_d: float
    policy: str = SQUARED_CONSTANT
    sigma_sq: float | None = None

    def __post_init__(self):
        if not self.sigma_d > 0:
            raise ValueError("sigma_d must be positive")
        if self.policy not in (SQUARED_CONSTANT, PROPAGATED):
            raise ValueError(f"unknown variance policy {self.policy!r}")
        if self.sigma_sq is not None and not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive when given")

    @property
    def squared_std(self) -> float:
        """Std used by the squared-constant policy (and the fallback)."""
        return self.sigma_d if self.sigma_sq is None else self.sigma_sq

    def variances(self, distances: np.ndarray) -> tuple[np.ndarray, bool]:
        """Per-row variances for the given raw distances.

        Returns the variance vector and a flag that is True when the
        propagated policy had to fall back for zero-distance rows.
        """
        distances = np.asarray(distances, dtype=float)
        const = self.squared_std**2
        if self.policy == SQUARED_CONSTANT:
            return np.full(distances.shape, const), False
        var = 4.0 * distances**2 * self.sigma_d**2
        zero = distances == 0.0
        if np.any(zero):
            var = np.where(zero, const, var)
            return var, True
        return var, False


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Immutable problem instance."""

    anchors: AnchorSet
    measurements: MeasurementSet
    noise: NoiseModel
    ground_truth: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if np.any(self.measurements.anchor_index >= self.anchors.count) or \
                np.any(self.measurements.anchor_index < 0):
            bad = int(self.measurements.anchor_index.max())
            raise UnknownAnchorError(f"anchor index {bad} out of range")
        if self.ground_truth is not None:
            t, x = self.ground_truth
            t = np.ascontiguousarray(t, dtype=float)
            x = np.ascontiguousarray(x, dtype=float)
            if x.ndim != 2 or x.shape[1] != self.anchors.dim:
                raise ValueError("ground truth dimension does not match anchors")
            if t.shape[0] != x.shape[0]:
                raise ValueError("ground truth times and positions differ in length")
            object.__setattr__(self, "ground_truth", (t, x))

    @property
    def dim(self) -> int:
        return self.anchors.dim

    @property
    def n_times(self) -> int:
        return self.measurements.n_times


def covariance_for(n: int, problem: ProblemData) -> np.ndarray:
    """Diagonal measurement covariance for time index ``n`` (``Mn x Mn``).

    Under the propagated policy, zero-distance rows fall back to the
    squared-constant entry and a ``UserWarning`` is emitted.
    """
    if not 0 <= n < problem.n_times:
        raise IndexError(f"time index {n} out of range")
    _, dist = problem.measurements.observations(n)
    var, fell_back = problem.noise.variances(dist)
    if fell_back:
        warnings.warn(
            f"zero measured distance at time index {n}; "
            "propagated variance fell back to the squared-constant entry",
            UserWarning, stacklevel=2,
        )
    return np.diag(var)


@dataclass(frozen=True, eq=False)
class FlatMeasurements:
    """Per-row measurement arrays shared by the cost, solver and certificate.

    All arrays have length E (one entry per measurement row) except
    ``offsets`` which mirrors the MeasurementSet layout.
    """

    time_index: np.ndarray
    anchor_pos: np.ndarray
    anchor_norm_sq: np.ndarray
    distance: np.ndarray
    distance_sq: np.ndarray
    weight: np.ndarray
    offsets: np.ndarray
    n_times: int
    dim: int

    @property
    def total(self) -> int:
        return self.distance.shape[0]


def flatten(problem: ProblemData) -> FlatMeasurements:
    """Build the flat per-row view of a problem (silent about fallbacks)."""
    meas = problem.measurements
    aidx = meas.anchor_index
    anchor_pos = problem.anchors.coordinates.T[aidx]
    var, _ = problem.noise.variances(meas.distance)
    return FlatMeasurements(
        time_index=meas.row_time_index(),
        anchor_pos=anchor_pos,
        anchor_norm_sq=np.sum(anchor_pos**2, axis=1),
        distance=meas.distance.copy(),
        distance_sq=meas.distance**2,
        weight=1.0 / var,
        offsets=meas.offsets,
        n_times=meas.n_times,
        dim=problem.anchors.dim,
    )


def _data_rows(path: str | Path):
    """Yield (line number, fields) for non-comment, non-blank CSV rows."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield line_no, [f.strip() for f in stripped.split(",")]


def _load_anchors(path: str | Path) -> AnchorSet:
    ids: list[str] = []
    rows: list[list[float]] = []
    header: list[str] | None = None
    for line_no, fields in _data_rows(path):
        if header is None:
            header = fields
            if header[0] != "id" or header[1:] not in (["x", "y"], ["x", "y", "z"]):
                raise ParseError(path, line_no, f"unexpected anchor header {fields!r}")
            continue
        if len(fields) != len(header):
            raise ParseError(path, line_no, f"expected {len(header)} fields, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields[1:]])
        except ValueError:
            raise ParseError(path, line_no, f"bad coordinate in {fields!r}") from None
        ids.append(fields[0])
    if header is None or not rows:
        raise ParseError(path, 0, "no anchor rows found")
    try:
        return AnchorSet(np.asarray(rows).T, tuple(ids))
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from exc


def _load_measurement_rows(path: str | Path, anchors: AnchorSet):
    id_to_index = {aid: i for i, aid in enumerate(anchors.ids)}
    times: list[float] = []
    aidx: list[int] = []
    dist: list[float] = []
    header_seen = False
    for line_no, fields in _data_rows(path):
        if not header_seen:
            if fields != ["t", "anchor_id", "distance"]:
                raise ParseError(path, line_no, f"unexpected measurement header {fields!r}")
            header_seen = True
            continue
        if len(fields) != 3:
            raise ParseError(path, line_no, f"expected 3 fields, got {len(fields)}")
        try:
            t = float(fields[0])
            d = float(fields[2])
        except ValueError:
            raise ParseError(path, line_no, f"bad number in {fields!r}") from None
        if fields[1] not in id_to_index:
            raise UnknownAnchorError(f"{path}:{line_no}: unknown anchor id {fields[1]!r}")
        times.append(t)
        aidx.append(id_to_index[fields[1]])
        dist.append(d)
    if not times:
        raise ParseError(path, 0, "no measurement rows found")
    return np.asarray(times), np.asarray(aidx), np.asarray(dist)


def _load_ground_truth(path: str | Path, dim: int):
    times: list[float] = []
    rows: list[list[float]] = []
    header_seen = False
    for line_no, fields in _data_rows(path):
        if not header_seen:
            if fields not in (["t", "x", "y"], ["t", "x", "y", "z"]):
                raise ParseError(path, line_no, f"unexpected ground-truth header {fields!r}")
            if len(fields) - 1 != dim:
                raise ParseError(path, line_no, "ground-truth dimension does not match anchors")
            header_seen = True
            continue
        if len(fields) != dim + 1:
            raise ParseError(path, line_no, f"expected {dim + 1} fields, got {len(fields)}")
        try:
            times.append(float(fields[0]))
            rows.append([float(v) for v in fields[1:]])
        except ValueError:
            raise ParseError(path, line_no, f"bad number in {fields!r}") from None
    return np.asarray(times), np.asarray(rows)


def load_problem(anchor_file: str | Path, measurement_file: str | Path,
                 noise: NoiseModel | None = None,
                 ground_truth_file: str | Path | None = None) -> ProblemData:
    """Load and validate a problem from CSV files.

    Rows sharing a timestamp (within ``GROUP_TOLERANCE``) are grouped into a
    single time index. ``noise`` defaults to a squared-constant model with
    ``sigma_d = 0.01``.
    """
    anchors = _load_anchors(anchor_file)
    times, aidx, dist = _load_measurement_rows(measurement_file, anchors)
    try:
        measurements = MeasurementSet.from_rows(times, aidx, dist)
    except ValueError as exc:
        raise DatasetError(f"{measurement_file}: {exc}") from exc
    ground_truth = None
    if ground_truth_file is not None:
        ground_truth = _load_ground_truth(ground_truth_file, anchors.dim)
    if noise is None:
        noise = NoiseModel(sigma_d=0.01)
    return ProblemData(anchors, measurements, noise, ground_truth)


def save_problem(problem: ProblemData, out_dir: str | Path) -> dict[str, Path]:
    """Write a problem back to CSV files; returns the paths written.

    Uses repr-precision floats so that a save/load round trip reproduces the
    instance bit for bit.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    dim = problem.anchors.dim
    coord_header = "x,y" if dim == 2 else "x,y,z"
    anchor_path = out / "anchors.csv"
    with open(anchor_path, "w", encoding="utf-8") as fh:
        fh.write(f"id,{coord_header}\n")
        for i, aid in enumerate(problem.anchors.ids):
            coords = ",".join(repr(float(c)) for c in problem.anchors.coordinates[:, i])
            fh.write(f"{aid},{coords}\n")
    paths["anchors"] = anchor_path

    meas_path = out / "measurements.csv"
    meas = problem.measurements
    with open(meas_path, "w", encoding="utf-8") as fh:
        fh.write("t,anchor_id,distance\n")
        for n in range(meas.n_times):
            t = repr(float(meas.times[n]))
            aidx, dist = meas.observations(n)
            for a, d in zip(aidx, dist):
                fh.write(f"{t},{problem.anchors.ids[a]},{repr(float(d))}\n")
    paths["measurements"] = meas_path

    if problem.ground_truth is not None:
        gt_path = out / "ground_truth.csv"
        t, x = problem.ground_truth
        with open(gt_path, "w", encoding="utf-8") as fh:
            fh.write(f"t,{coord_header}\n")
            for i in range(t.shape[0]):
                coords = ",".join(repr(float(c)) for c in x[i])
                fh.write(f"{repr(float(t[i]))},{coords}\n")
        paths["ground_truth"] = gt_path
    return paths
