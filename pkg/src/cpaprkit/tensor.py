"""Sparse count tensors in coordinate form, plus text I/O and mode orderings.

A tensor is stored as a flat list of nonzeros: an (nnz, N) integer
coordinate array and an (nnz,) float value array. Coordinates are
0-based internally; the ``.tns`` text format is 1-based. Duplicate
coordinates are accepted and treated additively by every consumer
(kernels accumulate per nonzero, so repeated entries simply contribute
twice).
"""

import io
from dataclasses import dataclass

import numpy as np


class TensorFormatError(ValueError):
    """Raised when tensor text cannot be parsed or violates the format."""


class SparseTensor:
    """Immutable-by-convention COO count tensor.

    Parameters
    ----------
    dims:
        Extent of each mode. All entries must be >= 1.
    coords:
        Integer array of shape (nnz, len(dims)), 0-based, each column
        bounded by the matching entry of ``dims``.
    values:
        Float array of shape (nnz,). Values must be finite and >= 0.

    Do not mutate ``coords`` or ``values`` after construction; per-mode
    orderings are cached on first use and assume the arrays are fixed.
    """

    def __init__(self, dims, coords, values):
        dims = tuple(int(d) for d in dims)
        coords = np.ascontiguousarray(coords, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if len(dims) < 1:
            raise ValueError("tensor must have at least one mode")
        if any(d < 1 for d in dims):
            raise ValueError(f"every dimension must be >= 1, got {dims}")
        if coords.ndim != 2 or coords.shape[1] != len(dims):
            raise ValueError(
                f"coords must have shape (nnz, {len(dims)}), got {coords.shape}"
            )
        if values.shape != (coords.shape[0],):
            raise ValueError(
                f"values must have shape ({coords.shape[0]},), got {values.shape}"
            )
        if coords.size and (coords.min() < 0 or (coords >= np.asarray(dims)).any()):
            raise ValueError("coordinates out of range for declared dimensions")
        if values.size and not (np.isfinite(values).all() and (values >= 0).all()):
            raise ValueError("values must be finite and nonnegative")
        self.dims = dims
        self.coords = coords
        self.values = values
        self._mode_coords = {}
        self._orderings = {}

    @property
    def order(self):
        """Number of modes N."""
        return len(self.dims)

    @property
    def nnz(self):
        """Number of stored entries (duplicates counted separately)."""
        return self.coords.shape[0]

    def __repr__(self):
        return f"SparseTensor(dims={self.dims}, nnz={self.nnz})"

    def mode_coords(self, mode):
        """Contiguous copy of the coordinate column for ``mode`` (cached)."""
        self._check_mode(mode)
        if mode not in self._mode_coords:
            self._mode_coords[mode] = np.ascontiguousarray(self.coords[:, mode])
        return self._mode_coords[mode]

    def ordering(self, mode):
        """Cached (permutation, segment starts, segment rows) for ``mode``.

        ``permutation`` stably sorts nonzeros by their mode-``mode``
        coordinate. ``segment_starts`` indexes the first position of each
        run of equal coordinates in the sorted order and ``segment_rows``
        gives that run's coordinate, so segment k covers sorted positions
        [segment_starts[k], segment_starts[k + 1]).
        """
        self._check_mode(mode)
        if mode not in self._orderings:
            perm = build_permutation(self, mode).order
            rows_sorted = self.mode_coords(mode)[perm]
            if rows_sorted.size:
                change = np.flatnonzero(np.diff(rows_sorted)) + 1
                starts = np.concatenate(([0], change)).astype(np.int64)
                seg_rows = rows_sorted[starts]
            else:
                starts = np.zeros(0, dtype=np.int64)
                seg_rows = np.zeros(0, dtype=np.int64)
            self._orderings[mode] = (perm, starts, seg_rows)
        return self._orderings[mode]

    def _check_mode(self, mode):
        if not 0 <= mode < self.order:
            raise ValueError(f"mode {mode} out of range for order-{self.order} tensor")


@dataclass(frozen=True)
class Permutation:
    """Stable sorted ordering of nonzeros by one mode's coordinate."""

    mode: int
    order: np.ndarray


def build_permutation(tensor, mode):
    """Stable argsort of the nonzeros by their ``mode`` coordinate.

    Ties keep their original relative order, so the result is reproducible
    for tensors with duplicate coordinates.
    """
    tensor._check_mode(mode)
    order = np.argsort(tensor.coords[:, mode], kind="stable").astype(np.int64)
    return Permutation(mode=mode, order=order)


def row_segments(permutation, tensor):
    """Contiguous (row, start, stop) runs in the permuted nonzero order.

    ``start``/``stop`` index into ``permutation.order``. The segments
    partition [0, nnz) and appear in increasing row order.
    """
    perm = permutation.order
    rows = tensor.coords[:, permutation.mode][perm]
    segments = []
    pos = 0
    while pos < rows.size:
        row = rows[pos]
        stop = pos + 1
        while stop < rows.size and rows[stop] == row:
            stop += 1
        segments.append((int(row), pos, stop))
        pos = stop
    return segments


def parse_tns(source):
    """Parse ``.tns`` text into a SparseTensor.

    The format is line-oriented: blank lines and lines starting with ``#``
    are skipped; every data line holds N 1-based integer coordinates
    followed by one value. An optional first line of N integers declares
    the dimensions; it is recognized when a later line carries exactly one
    more token. Without a header, each dimension is the maximum coordinate
    observed in that mode.

    ``source`` may be a string or a readable text stream. Raises
    TensorFormatError on malformed input.
    """
    if isinstance(source, str):
        stream = io.StringIO(source)
    else:
        stream = source
    lines = []
    for lineno, raw in enumerate(stream, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        lines.append((lineno, text.split()))
    if not lines:
        raise TensorFormatError("no tensor data found")

    header = None
    first = lines[0][1]
    if len(lines) > 1 and len(lines[1][1]) == len(first) + 1:
        try:
            header = [int(tok) for tok in first]
        except ValueError:
            header = None
        if header is not None and any(d < 1 for d in header):
            raise TensorFormatError(
                f"line {lines[0][0]}: dimension header entries must be >= 1"
            )
    data_lines = lines[1:] if header is not None else lines

    if header is not None:
        ncols = len(header) + 1
    else:
        ncols = len(data_lines[0][1])
        if ncols < 2:
            raise TensorFormatError(
                f"line {data_lines[0][0]}: need at least one coordinate and a value"
            )
    norder = ncols - 1

    coords = np.zeros((len(data_lines), norder), dtype=np.int64)
    values = np.zeros(len(data_lines), dtype=np.float64)
    for k, (lineno, toks) in enumerate(data_lines):
        if len(toks) != ncols:
            raise TensorFormatError(
                f"line {lineno}: expected {ncols} fields, got {len(toks)}"
            )
        for m in range(norder):
            try:
                c = int(toks[m])
            except ValueError as exc:
                raise TensorFormatError(
                    f"line {lineno}: bad coordinate {toks[m]!r}"
                ) from exc
            if c < 1:
                raise TensorFormatError(
                    f"line {lineno}: coordinates are 1-based, got {c}"
                )
            coords[k, m] = c - 1
        try:
            v = float(toks[-1])
        except ValueError as exc:
            raise TensorFormatError(f"line {lineno}: bad value {toks[-1]!r}") from exc
        if not np.isfinite(v) or v < 0:
            raise TensorFormatError(
                f"line {lineno}: values must be finite and nonnegative, got {toks[-1]}"
            )
        values[k] = v

    if header is not None:
        dims = tuple(header)
        observed = coords.max(axis=0) + 1 if coords.size else np.ones(norder)
        if (observed > np.asarray(dims)).any():
            raise TensorFormatError("coordinate exceeds declared dimension")
    else:
        dims = tuple(int(c) for c in coords.max(axis=0) + 1)
    try:
        return SparseTensor(dims, coords, values)
    except ValueError as exc:
        raise TensorFormatError(str(exc)) from exc


def serialize_tns(tensor, stream=None):
    """Write a SparseTensor as ``.tns`` text; returns the text.

    Always emits a dimension header so the declared extents survive a
    round trip even when trailing slices are empty. Values use %.17g,
    which reparses to the identical float64.
    """
    out = stream if stream is not None else io.StringIO()
    out.write(" ".join(str(d) for d in tensor.dims) + "\n")
    for k in range(tensor.nnz):
        coord = " ".join(str(int(c) + 1) for c in tensor.coords[k])
        out.write(f"{coord} {tensor.values[k]:.17g}\n")
    if stream is None:
        return out.getvalue()
    return None


def load_tns(path):
    """Read a ``.tns`` file from disk."""
    with open(path, "r", encoding="utf-8") as handle:
        return parse_tns(handle)


def save_tns(tensor, path):
    """Write a tensor to a ``.tns`` file."""
    with open(path, "w", encoding="utf-8") as handle:
        serialize_tns(tensor, handle)


def random_count_tensor(dims, nnz, seed, lam=3.0):
    """Synthetic count tensor: uniform coordinates, 1 + Poisson(lam) values.

    Coordinates are drawn independently per mode, so duplicates can occur;
    that mirrors real count data and exercises the additive-duplicate
    convention.
    """
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in dims)
    coords = np.column_stack(
        [rng.integers(0, d, size=nnz) for d in dims]
    ).astype(np.int64)
    if coords.size == 0:
        coords = coords.reshape(nnz, len(dims))
    values = (1.0 + rng.poisson(lam, size=nnz)).astype(np.float64)
    return SparseTensor(dims, coords, values)
