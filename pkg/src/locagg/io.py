"""Binary formats, CSV import, graph spec files and key=value reports.

All binary formats are little-endian and share one header layout:
4-byte magic, u16 version, then format-specific fields. Readers raise a
distinct :class:`FormatError` subclass per failure and name the byte offset.
"""

import csv
import math
import os
import re
import struct

import numpy as np

from .data import SignalMatrix, TensorDataset
from .errors import (
    BadMagicError,
    DimensionOverflowError,
    FormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    ValidationError,
)
from .families import Family
from .model import FittedModel
from .penalties import GraphPenalty, laplacian_from_coords

VERSION = 1
DATASET_MAGIC = b"LAGG"
GRAPH_MAGIC = b"LAGL"
MODEL_MAGIC = b"LAGM"
SIGNAL_MAGIC = b"LAGS"

# refuse to allocate more than this many f64 values from a header
MAX_ELEMENTS = 1 << 36

_F8 = np.dtype("<f8")


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError(
                f"{self.path}: truncated {what} at offset {self.pos} "
                f"(need {n} bytes, {len(self.buf) - self.pos} left)"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, count, what):
        return np.frombuffer(self.take(count * 8, what), dtype=_F8).astype(float)

    def header(self, magic, kind):
        got = self.take(4, "magic")
        if got != magic:
            raise BadMagicError(
                f"{self.path}: bad magic {bytes(got)!r} at offset 0, expected {magic!r} ({kind} file)"
            )
        (version,) = self.unpack("<H", "version")
        if version != VERSION:
            raise UnsupportedVersionError(
                f"{self.path}: unsupported {kind} version {version} at offset 4 (expected {VERSION})"
            )

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(
                f"{self.path}: {len(self.buf) - self.pos} trailing bytes at offset {self.pos}"
            )


def _dims(reader, path, *dims, extra=0):
    total = extra
    for d in dims:
        if d > MAX_ELEMENTS:
            raise DimensionOverflowError(f"{path}: dimension {d} exceeds the supported maximum")
    prod = 1
    for d in dims:
        prod *= d
    total += prod
    if total > MAX_ELEMENTS:
        raise DimensionOverflowError(
            f"{path}: header implies {total} values (offset {reader.pos}); refusing to allocate"
        )


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc


def _write_bytes(path, parts):
    with open(path, "wb") as fh:
        for p in parts:
            fh.write(p)


def _f8(a):
    return np.ascontiguousarray(a, dtype=_F8).tobytes()


def _family(reader, code, offset):
    try:
        return Family(code)
    except ValueError:
        raise FormatError(f"{reader.path}: unknown family code {code} at offset {offset}") from None


def save_dataset(ds, path):
    header = DATASET_MAGIC + struct.pack("<HBBQQQ", VERSION, int(ds.family), 0, ds.n, ds.tau, ds.L)
    _write_bytes(path, [header, _f8(ds.y), _f8(ds.blocks)])


def load_dataset(path):
    r = _Reader(_read_bytes(path), path)
    r.header(DATASET_MAGIC, "dataset")
    code, _reserved = r.unpack("<BB", "family")
    family = _family(r, code, 6)
    n, tau, L = r.unpack("<QQQ", "dimensions")
    _dims(r, path, n, tau, L, extra=n)
    y = r.array(n, "response vector")
    blocks = r.array(n * tau * L, "covariate blocks").reshape(L, n, tau)
    r.finish()
    try:
        return TensorDataset(blocks, y, family)
    except ValidationError as exc:
        raise FormatError(f"{path}: invalid contents: {exc}") from exc


def _read_csv_matrix(path):
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: not a numeric CSV: {exc}") from exc
    return arr


def import_csv(directory, family="gaussian"):
    """Read ``loc_0.csv .. loc_{L-1}.csv`` (n x tau each) and ``y.csv``."""
    if not os.path.isdir(directory):
        raise FormatError(f"{directory}: not a directory")
    pattern = re.compile(r"^loc_(\d+)\.csv$")
    found = {}
    for name in os.listdir(directory):
        m = pattern.match(name)
        if m:
            found[int(m.group(1))] = os.path.join(directory, name)
    if not found:
        raise FormatError(f"{directory}: no loc_<l>.csv files")
    L = max(found) + 1
    missing = [l for l in range(L) if l not in found]
    if missing:
        raise FormatError(f"{directory}: missing loc_{missing[0]}.csv")
    blocks = [_read_csv_matrix(found[l]) for l in range(L)]
    y = _read_csv_matrix(os.path.join(directory, "y.csv")).reshape(-1)
    shapes = {b.shape for b in blocks}
    if len(shapes) != 1:
        raise FormatError(f"{directory}: location files disagree in shape: {sorted(shapes)}")
    try:
        return TensorDataset(np.stack(blocks), y, family)
    except ValidationError as exc:
        raise FormatError(f"{directory}: {exc}") from exc


def export_csv(ds, directory):
    os.makedirs(directory, exist_ok=True)
    for l in range(ds.L):
        np.savetxt(os.path.join(directory, f"loc_{l}.csv"), ds.blocks[l], delimiter=",", fmt="%.17g")
    np.savetxt(os.path.join(directory, "y.csv"), ds.y, fmt="%.17g")


def save_graph(graph, path):
    L = graph.n_locations
    _write_bytes(path, [GRAPH_MAGIC + struct.pack("<HHQ", VERSION, 0, L), _f8(graph.W)])


def load_graph(path):
    r = _Reader(_read_bytes(path), path)
    r.header(GRAPH_MAGIC, "graph")
    _reserved, L = r.unpack("<HQ", "dimensions")
    _dims(r, path, L, L)
    W = r.array(L * L, "weight matrix").reshape(L, L)
    r.finish()
    try:
        return GraphPenalty(W)
    except ValidationError as exc:
        raise FormatError(f"{path}: invalid weights: {exc}") from exc


def _text_rows(path):
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    rows = []
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            rows.append((lineno, [float(p) for p in parts]))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric field") from None
    return rows


def _index(value, path, lineno):
    if value != int(value) or value < 0:
        raise FormatError(f"{path}:{lineno}: location index must be a nonnegative integer")
    return int(value)


def read_edge_list(path, n_locations=None):
    """``l l' weight`` lines (weight optional, default 1); each edge is undirected."""
    rows = _text_rows(path)
    edges = []
    for lineno, vals in rows:
        if len(vals) not in (2, 3):
            raise FormatError(f"{path}:{lineno}: expected 'l l_prime [weight]'")
        l, m = _index(vals[0], path, lineno), _index(vals[1], path, lineno)
        w = vals[2] if len(vals) == 3 else 1.0
        edges.append((lineno, l, m, w))
    L = n_locations if n_locations is not None else 1 + max(
        (max(l, m) for _, l, m, _ in edges), default=-1)
    W = np.zeros((L, L))
    for lineno, l, m, w in edges:
        if l >= L or m >= L:
            raise ValidationError(f"{path}:{lineno}: location outside 0..{L - 1}")
        if l == m:
            raise ValidationError(f"{path}:{lineno}: self-loop at location {l}")
        if W[l, m] not in (0.0, w):
            raise ValidationError(f"{path}:{lineno}: conflicting weights for edge ({l}, {m})")
        W[l, m] = W[m, l] = w
    return GraphPenalty(W)


def read_coords(path):
    """``l c1 c2 [c3]`` lines, returned as an array ordered by location index."""
    rows = _text_rows(path)
    if not rows:
        raise FormatError(f"{path}: no coordinates")
    width = {len(v) for _, v in rows}
    if len(width) != 1 or width.pop() not in (3, 4):
        raise FormatError(f"{path}: every line needs 'l c1 c2' or 'l c1 c2 c3'")
    idx = [_index(v[0], path, n) for n, v in rows]
    if sorted(idx) != list(range(len(idx))):
        raise FormatError(f"{path}: location indices must be exactly 0..{len(idx) - 1}")
    coords = np.empty((len(idx), len(rows[0][1]) - 1))
    for i, (_, v) in zip(idx, rows):
        coords[i] = v[1:]
    return coords


def graph_from_coords_file(path, theta, metric="euclidean"):
    return laplacian_from_coords(read_coords(path), theta, metric)


def save_model(model, path):
    flags = (1 if model.converged else 0) | (2 if model.path is not None else 0)
    header = MODEL_MAGIC + struct.pack("<HBBQQQd", VERSION, int(model.family), flags, model.tau,
                                       model.L, model.iterate, model.lambda_agg)
    parts = [header, _f8(model.lambda_sm), _f8(model.lambda_sp), _f8(model.B)]
    if model.path is not None:
        parts += [struct.pack("<Q", model.path.shape[0]), _f8(model.path)]
    _write_bytes(path, parts)


def load_model(path):
    r = _Reader(_read_bytes(path), path)
    r.header(MODEL_MAGIC, "model")
    code, flags = r.unpack("<BB", "family")
    family = _family(r, code, 6)
    tau, L, iterate = r.unpack("<QQQ", "dimensions")
    (lambda_agg,) = r.unpack("<d", "lambda_agg")
    _dims(r, path, tau + 1, L, extra=2 * L)
    lam_sm = r.array(L, "lambda_sm")
    lam_sp = r.array(L, "lambda_sp")
    B = r.array((tau + 1) * L, "coefficients").reshape(tau + 1, L)
    path_arr = None
    if flags & 2:
        (K,) = r.unpack("<Q", "path length")
        _dims(r, path, K, tau + 1, L)
        path_arr = r.array(K * (tau + 1) * L, "path snapshots").reshape(K, tau + 1, L)
    r.finish()
    return FittedModel(B, family, lambda_agg, lam_sm, lam_sp, bool(flags & 1), iterate, path_arr)


def save_signal(signal, path):
    R, L = signal.spatial.shape
    tau = signal.temporal.shape[1]
    header = SIGNAL_MAGIC + struct.pack("<HHQQQd", VERSION, 0, R, tau, L, signal.scale)
    _write_bytes(path, [header, _f8(signal.spatial), _f8(signal.temporal)])


def load_signal(path):
    r = _Reader(_read_bytes(path), path)
    r.header(SIGNAL_MAGIC, "signal")
    _reserved, R, tau, L = r.unpack("<HQQQ", "dimensions")
    (scale,) = r.unpack("<d", "scale")
    _dims(r, path, R, tau + L)
    spatial = r.array(R * L, "spatial factors").reshape(R, L)
    temporal = r.array(R * tau, "temporal factors").reshape(R, tau)
    r.finish()
    return SignalMatrix(spatial, temporal, scale)


def _format_value(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_report(path, values):
    """Flat ``key=value`` lines, one per entry, in insertion order."""
    with open(path, "w") as fh:
        for k, v in values.items():
            if "=" in str(k) or "\n" in str(k):
                raise ValidationError(f"invalid report key {k!r}")
            fh.write(f"{k}={_format_value(v)}\n")


def read_report(path):
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config(path):
    """Config files use the report syntax; values stay strings until parsed by the CLI."""
    return read_report(path)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_format_value(v) if isinstance(v, float) else v for v in row])


def read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    return rows[0], rows[1:]
