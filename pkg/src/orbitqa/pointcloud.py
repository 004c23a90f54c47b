"""Point cloud container, PLY I/O, and basic geometry.

Clouds are N xyz positions with RGB colors on [0, 1]. PLY input may be ASCII
or binary little-endian; colorless files are accepted and filled with
mid-gray (the ``has_native_color`` flag records that the fill happened).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PlyError, ValidationError

DEFAULT_COLOR = (0.5, 0.5, 0.5)

# PLY scalar types -> (numpy little-endian dtype, is_integer_color_type)
_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_FLOAT_TYPES = {"float", "float32", "double", "float64"}
_COLOR8_TYPES = {"uchar", "uint8"}


@dataclass
class PointCloud:
    """N points with geometry and per-point RGB color.

    positions: (N, 3) float64, finite.
    colors: (N, 3) float64, every channel on [0, 1].
    has_native_color: False when the source file had no color and the
        mid-gray default was filled in.
    """

    positions: np.ndarray
    colors: np.ndarray = field(default=None)
    has_native_color: bool = True

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValidationError(f"positions must be (N, 3) with N >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("positions contain non-finite values")
        if self.colors is None:
            col = np.full_like(pos, DEFAULT_COLOR[0])
            self.has_native_color = False
        else:
            col = np.asarray(self.colors, dtype=np.float64)
        if col.shape != pos.shape:
            raise ValidationError(f"colors must match positions shape {pos.shape}, got {col.shape}")
        if not np.all(np.isfinite(col)) or col.min() < 0.0 or col.max() > 1.0:
            raise ValidationError("colors must be finite and within [0, 1]")
        self.positions = pos
        self.colors = col

    def __len__(self) -> int:
        return self.positions.shape[0]


def mean_center(pc: PointCloud) -> np.ndarray:
    """Component-wise arithmetic mean of the positions."""
    return pc.positions.mean(axis=0)


def bounding_radius(pc: PointCloud, center: np.ndarray) -> float:
    """Largest Euclidean distance from ``center`` to any point."""
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (3,) or not np.all(np.isfinite(center)):
        raise ValidationError("center must be a finite 3-vector")
    return float(np.linalg.norm(pc.positions - center, axis=1).max())


def _parse_header(data: bytes):
    """Split the header; return (format, elements, payload offset).

    elements is a list of (name, count, properties) where properties is a
    list of (type_name, prop_name). List properties are rejected for the
    vertex element and for any element preceding it.
    """
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise PlyError("not a PLY file (missing 'ply' magic or 'end_header')")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise PlyError("missing newline after end_header")
    header_text = data[:nl].decode("ascii", errors="replace")
    payload_start = nl + 1

    fmt = None
    elements = []
    for raw in header_text.splitlines():
        line = raw.strip().rstrip("\r")
        if not line or line in ("ply", "end_header") or line.startswith(("comment", "obj_info")):
            continue
        tokens = line.split()
        if tokens[0] == "format":
            if len(tokens) < 2:
                raise PlyError("malformed format line")
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise PlyError(f"malformed element line: {line!r}")
            try:
                count = int(tokens[2])
            except ValueError:
                raise PlyError(f"bad element count in: {line!r}") from None
            if count < 0:
                raise PlyError(f"negative element count in: {line!r}")
            elements.append((tokens[1], count, []))
        elif tokens[0] == "property":
            if not elements:
                raise PlyError("property before any element")
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise PlyError(f"malformed list property: {line!r}")
                elements[-1][2].append(("list", tokens[4]))
            else:
                if len(tokens) != 3:
                    raise PlyError(f"malformed property line: {line!r}")
                if tokens[1] not in _PLY_TYPES:
                    raise PlyError(f"unknown property type {tokens[1]!r}")
                elements[-1][2].append((tokens[1], tokens[2]))
        else:
            raise PlyError(f"unrecognized header line: {line!r}")

    if fmt is None:
        raise PlyError("header has no format line")
    if fmt == "binary_big_endian":
        raise PlyError("binary_big_endian PLY is not supported")
    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyError(f"unsupported PLY format {fmt!r}")
    return fmt, elements, payload_start


def _vertex_layout(props):
    """Map x/y/z and red/green/blue property names to column indices."""
    names = [name for _, name in props]
    try:
        xyz = tuple(names.index(k) for k in ("x", "y", "z"))
    except ValueError:
        raise PlyError("vertex element lacks x/y/z properties") from None
    for i in xyz:
        if props[i][0] not in _FLOAT_TYPES:
            raise PlyError(f"coordinate property {names[i]!r} must be a floating type")
    rgb = None
    if all(k in names for k in ("red", "green", "blue")):
        rgb = tuple(names.index(k) for k in ("red", "green", "blue"))
        kinds = {props[i][0] for i in rgb}
        if not (kinds <= _COLOR8_TYPES or kinds <= _FLOAT_TYPES):
            raise PlyError("red/green/blue must all be 8-bit integers or all floating types")
    return xyz, rgb


def _colors_from_columns(cols: np.ndarray, type_name: str) -> np.ndarray:
    if type_name in _COLOR8_TYPES:
        return cols.astype(np.float64) / 255.0
    cols = cols.astype(np.float64)
    if cols.size and (cols.min() < 0.0 or cols.max() > 1.0):
        raise PlyError("float color channels must lie in [0, 1]")
    return cols


def parse_ply(data: bytes) -> PointCloud:
    """Parse ASCII or binary little-endian PLY bytes into a PointCloud.

    Positions come from the x/y/z vertex properties in file order; 8-bit
    colors are scaled by 1/255. Files without red/green/blue get the
    mid-gray default and has_native_color=False.
    """
    fmt, elements, payload_start = _parse_header(data)
    vertex_idx = next((i for i, (name, _, _) in enumerate(elements) if name == "vertex"), None)
    if vertex_idx is None:
        raise PlyError("no vertex element")
    _, count, props = elements[vertex_idx]
    if count < 1:
        raise PlyError("vertex element must contain at least one vertex")
    if any(t == "list" for t, _ in props):
        raise PlyError("list properties on the vertex element are not supported")
    xyz_cols, rgb_cols = _vertex_layout(props)

    if fmt == "ascii":
        rows = _ascii_rows(data[payload_start:], elements, vertex_idx, count, len(props))
        pos = rows[:, list(xyz_cols)]
        if rgb_cols is not None:
            col = _colors_from_columns(rows[:, list(rgb_cols)], props[rgb_cols[0]][0])
    else:
        table = _binary_rows(data[payload_start:], elements, vertex_idx, count)
        pos = np.stack([table[props[i][1]].astype(np.float64) for i in xyz_cols], axis=1)
        if rgb_cols is not None:
            raw = np.stack([table[props[i][1]] for i in rgb_cols], axis=1)
            col = _colors_from_columns(raw, props[rgb_cols[0]][0])

    if not np.all(np.isfinite(pos)):
        raise PlyError("vertex coordinates contain non-finite values")
    if rgb_cols is None:
        return PointCloud(pos, np.full_like(pos, DEFAULT_COLOR[0]), has_native_color=False)
    return PointCloud(pos, np.clip(col, 0.0, 1.0), has_native_color=True)


def _ascii_rows(payload: bytes, elements, vertex_idx, count, n_props) -> np.ndarray:
    lines = payload.decode("ascii", errors="replace").splitlines()
    lines = [ln for ln in (l.strip() for l in lines) if ln and not ln.startswith("comment")]
    skip = 0
    for name, n, props in elements[:vertex_idx]:
        if any(t == "list" for t, _ in props):
            # Row length is data-dependent but each row is one line.
            pass
        skip += n
    if len(lines) < skip + count:
        raise PlyError(f"declared vertex count {count} exceeds available data")
    rows = np.empty((count, n_props), dtype=np.float64)
    for i, line in enumerate(lines[skip:skip + count]):
        parts = line.split()
        if len(parts) < n_props:
            raise PlyError(f"vertex row {i} has {len(parts)} values, expected {n_props}")
        try:
            rows[i] = [float(p) for p in parts[:n_props]]
        except ValueError:
            raise PlyError(f"vertex row {i} holds a non-numeric value") from None
    return rows


def _binary_rows(payload: bytes, elements, vertex_idx, count) -> np.ndarray:
    offset = 0
    for name, n, props in elements[:vertex_idx]:
        if any(t == "list" for t, _ in props):
            raise PlyError(f"cannot skip element {name!r} with list properties in binary PLY")
        row = sum(np.dtype("<" + _PLY_TYPES[t]).itemsize for t, _ in props)
        offset += row * n
    _, _, props = elements[vertex_idx]
    dtype = np.dtype([(name, "<" + _PLY_TYPES[t]) for t, name in props])
    need = offset + dtype.itemsize * count
    if len(payload) < need:
        raise PlyError(f"declared vertex count {count} exceeds available data")
    return np.frombuffer(payload, dtype=dtype, count=count, offset=offset)


def write_ply(pc: PointCloud, mode: str = "binary_le") -> bytes:
    """Serialize a PointCloud to PLY bytes.

    Positions are written as doubles (so parse_ply(write_ply(pc)) reproduces
    them exactly); colors are written as 8-bit with round-to-nearest.
    """
    if mode not in ("ascii", "binary_le"):
        raise ValidationError(f"mode must be 'ascii' or 'binary_le', got {mode!r}")
    n = len(pc)
    fmt = "ascii" if mode == "ascii" else "binary_little_endian"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {n}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    col8 = np.rint(pc.colors * 255.0).astype(np.uint8)
    if mode == "ascii":
        body_lines = []
        for (x, y, z), (r, g, b) in zip(pc.positions, col8):
            body_lines.append(f"{x:.17g} {y:.17g} {z:.17g} {r} {g} {b}")
        return header.encode("ascii") + "\n".join(body_lines).encode("ascii") + b"\n"
    rec = np.empty(n, dtype=np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                                      ("red", "u1"), ("green", "u1"), ("blue", "u1")]))
    rec["x"], rec["y"], rec["z"] = pc.positions.T
    rec["red"], rec["green"], rec["blue"] = col8.T
    return header.encode("ascii") + rec.tobytes()


def load_ply(path) -> PointCloud:
    with open(path, "rb") as f:
        return parse_ply(f.read())


def save_ply(pc: PointCloud, path, mode: str = "binary_le") -> None:
    with open(path, "wb") as f:
        f.write(write_ply(pc, mode))
