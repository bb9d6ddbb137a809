"""Multivariate series container, CSV I/O, chronological splits, normalization and windowing."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class SeriesError(ValueError):
    """Invalid series data or a split/window request that cannot be satisfied."""


@dataclass(frozen=True)
class SeriesFrame:
    """T x N float64 matrix of observations with one name per column.

    Rows are time steps in temporal order. The array is copied and made
    read-only on construction.
    """

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise SeriesError(f"values must be a non-empty T x N matrix, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise SeriesError("values contain NaN or infinite entries")
        names = tuple(str(n) for n in self.names)
        if len(names) != values.shape[1]:
            raise SeriesError(f"expected {values.shape[1]} names, got {len(names)}")
        if len(set(names)) != len(names):
            raise SeriesError("column names must be distinct")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_array(cls, values, names=None) -> SeriesFrame:
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if names is None:
            names = [f"x{i}" for i in range(arr.shape[1])]
        return cls(arr, tuple(names))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> SeriesFrame:
        return SeriesFrame(self.values[start:stop], self.names)


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SeriesError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise SeriesError(f"row {row}, column {col}: non-finite value {text!r}")
    return value


def load_csv(path: str | os.PathLike, has_header: bool = True) -> SeriesFrame:
    """Read a comma-separated numeric file, one time step per row.

    Lines starting with ``#`` are comments. Errors report 1-based data row
    numbers (counting the header) and 1-based column numbers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh)
                if r and any(c.strip() for c in r) and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SeriesError(f"{path}: empty file")
    header = None
    first_line = 1
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    if not rows:
        raise SeriesError(f"{path}: no data rows")
    width = len(header) if header is not None else len(rows[0])
    data = []
    for i, r in enumerate(rows):
        line = first_line + i
        if len(r) != width:
            raise SeriesError(f"row {line}: expected {width} columns, found {len(r)} (ragged rows)")
        data.append([_parse_cell(c.strip(), line, j + 1) for j, c in enumerate(r)])
    names = header if header is not None else [f"x{j}" for j in range(width)]
    return SeriesFrame(np.array(data, dtype=np.float64), tuple(names))


def format_float(x: float) -> str:
    return repr(float(x))


def save_csv(frame: SeriesFrame, path: str | os.PathLike, header: bool = True, comment: str | None = None) -> None:
    """Write ``frame`` with the shortest round-trip float representation."""
    buf = io.StringIO()
    if comment is not None:
        buf.write("# " + comment.replace("\n", " ") + "\n")
    if header:
        buf.write(",".join(frame.names) + "\n")
    for row in frame.values:
        buf.write(",".join(format_float(v) for v in row) + "\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    valid_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        fracs = (self.train_frac, self.valid_frac, self.test_frac)
        if any(not (0.0 < f < 1.0) for f in fracs):
            raise SeriesError(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise SeriesError(f"split fractions must sum to 1, got {sum(fracs)!r}")

    def boundaries(self, T: int) -> tuple[int, int]:
        # remainder rows fall into the test split
        b1 = math.floor(T * self.train_frac)
        b2 = math.floor(T * (self.train_frac + self.valid_frac))
        return b1, b2


def split_chronological(
    frame: SeriesFrame, spec: SplitSpec = SplitSpec(), window: int | None = None
) -> tuple[SeriesFrame, SeriesFrame, SeriesFrame]:
    """Cut ``frame`` into contiguous train / valid / test blocks.

    If ``window`` is given every block must hold at least ``window + 2`` rows.
    """
    b1, b2 = spec.boundaries(frame.T)
    parts = (frame.rows(0, b1), frame.rows(b1, b2), frame.rows(b2, frame.T))
    lengths = [b1, b2 - b1, frame.T - b2]
    minimum = 1 if window is None else window + 2
    for name, n in zip(("train", "valid", "test"), lengths):
        if n < minimum:
            raise SeriesError(
                f"{name} split has {n} rows; at least {minimum} are needed"
                + ("" if window is None else f" for window length {window}")
            )
    return parts


@dataclass(frozen=True)
class Normalizer:
    """Per-column affine map fitted on the training split (population std)."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def apply_frame(self, frame: SeriesFrame) -> SeriesFrame:
        return SeriesFrame(self.apply(frame.values), frame.names)


def fit_normalizer(train: SeriesFrame) -> Normalizer:
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    degenerate = ~(std > 0)
    if degenerate.any():
        cols = [train.names[i] for i in np.flatnonzero(degenerate)]
        logger.warning("constant training columns %s: std set to 1", cols)
        std = np.where(degenerate, 1.0, std)
    mean.setflags(write=False)
    std.setflags(write=False)
    return Normalizer(mean, std)


@dataclass(frozen=True)
class WindowSpec:
    W: int = 60
    horizon: int = 1

    def __post_init__(self):
        if self.W < 1:
            raise SeriesError(f"window length must be >= 1, got {self.W}")
        if self.horizon != 1:
            raise SeriesError("only one-step-ahead forecasting (horizon=1) is supported")


@dataclass(frozen=True)
class Windows:
    """Supervised windows cut from one frame.

    ``history[s]`` holds X_{t-W} .. X_{t-1} (oldest first) for target index
    ``t = target_index[s]``. ``preceding[s]`` is X_{t-W-1}; where that row does
    not exist ``mean_fill[s]`` is True and the row holds NaN until the caller
    substitutes the training mean.
    """

    history: np.ndarray
    preceding: np.ndarray
    mean_fill: np.ndarray
    target: np.ndarray
    target_index: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.target.shape[0]

    def filled(self, mean: np.ndarray) -> np.ndarray:
        """``preceding`` with mean-fill rows replaced by ``mean``."""
        out = self.preceding.copy()
        out[self.mean_fill] = mean
        return out

    def select(self, mask) -> Windows:
        return Windows(
            self.history[mask], self.preceding[mask], self.mean_fill[mask],
            self.target[mask], self.target_index[mask],
        )


def make_windows(frame: SeriesFrame, spec: WindowSpec, start: int | None = None,
                 stop: int | None = None) -> Windows:
    """Windows for targets ``t`` in ``[max(start, W), stop)``.

    Histories may read any earlier row of ``frame``, which is how validation
    and test windows borrow the tail of the preceding split.
    """
    W = spec.W
    X = frame.values
    T = X.shape[0]
    if T < W + 1:
        raise SeriesError(f"frame has {T} rows; window length {W} needs at least {W + 1}")
    lo = W if start is None else max(start, W)
    hi = T if stop is None else min(stop, T)
    if hi <= lo:
        raise SeriesError(f"no targets in [{lo}, {hi}) for window length {W}")
    idx = np.arange(lo, hi)
    offsets = np.arange(-W, 0)
    history = X[idx[:, None] + offsets[None, :]]
    prev_idx = idx - W - 1
    mean_fill = prev_idx < 0
    preceding = np.full((idx.size, X.shape[1]), np.nan)
    preceding[~mean_fill] = X[prev_idx[~mean_fill]]
    return Windows(history, preceding, mean_fill, X[idx].copy(), idx)


def sample_path() -> str:
    """Path of the bundled sample: 500 x 3 seasonal series with AR(1) noise (rho = 0.8)."""
    from importlib.resources import files

    return str(files("autocorrnet") / "data" / "sample_ar1.csv")
