"""PLY reading and writing for splat scenes.

Supports ASCII and binary little-endian vertex-only files with the usual
splat layout: x, y, z, rot_0..rot_3 (w, x, y, z), scale_0, scale_1, an
optional scale_2, opacity, and an optional spike_threshold.  Any other
vertex properties are carried through untouched as an opaque payload.
"""

import io
import warnings

import numpy as np

from .errors import SplatDataError, SplatFormatError
from .model import MIN_CONTRIBUTION, SplatSet, canonicalize, drop_third_scale

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
_PLY_NAMES = {
    "i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
    "i4": "int", "u4": "uint", "f4": "float", "f8": "double",
}

CORE_PROPERTIES = ("x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                   "scale_0", "scale_1", "opacity")
OPTIONAL_PROPERTIES = ("scale_2", "spike_threshold")


class PlySchema:
    """Property names and dtypes of a scene file, for faithful re-writing."""

    def __init__(self, names, dtypes):
        self.names = list(names)
        self.dtypes = list(dtypes)

    @classmethod
    def default(cls, has_spike=True, payload_dtype=None):
        names = ["x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                 "scale_0", "scale_1", "opacity"]
        if has_spike:
            names.append("spike_threshold")
        dtypes = ["f4"] * len(names)
        if payload_dtype is not None:
            for field in payload_dtype.names:
                names.append(field)
                dtypes.append(payload_dtype.fields[field][0].str.lstrip("<>|="))
        return cls(names, dtypes)


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _parse_header(stream):
    magic = stream.readline().strip()
    if magic != b"ply":
        raise SplatFormatError("not a PLY file (missing 'ply' magic)")
    fmt = None
    properties = []
    vertex_count = None
    in_vertex = False
    while True:
        line = stream.readline()
        if not line:
            raise SplatFormatError("unterminated PLY header")
        tokens = line.decode("ascii", errors="replace").strip().split()
        if not tokens:
            continue
        key = tokens[0]
        if key == "comment":
            continue
        if key == "format":
            if tokens[1] == "ascii":
                fmt = "ascii"
            elif tokens[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise SplatFormatError(f"unsupported PLY format {tokens[1]!r}")
        elif key == "element":
            if tokens[1] == "vertex":
                in_vertex = True
                vertex_count = int(tokens[2])
            else:
                if vertex_count is None:
                    raise SplatFormatError(
                        f"unsupported leading element {tokens[1]!r} before vertex")
                in_vertex = False
        elif key == "property":
            if not in_vertex:
                continue
            if tokens[1] == "list":
                raise SplatFormatError("list properties are not supported on vertices")
            if tokens[1] not in _PLY_TYPES:
                raise SplatFormatError(f"unknown property type {tokens[1]!r}")
            properties.append((tokens[2], _PLY_TYPES[tokens[1]]))
        elif key == "end_header":
            break
    if fmt is None or vertex_count is None:
        raise SplatFormatError("PLY header lacks format or vertex element")
    return fmt, vertex_count, properties


def _read_records(stream, fmt, count, properties):
    dtype = np.dtype([(name, "<" + typ) for name, typ in properties])
    if fmt == "binary":
        data = stream.read(dtype.itemsize * count)
        if len(data) < dtype.itemsize * count:
            raise SplatFormatError("truncated binary vertex data")
        return np.frombuffer(data, dtype=dtype, count=count).copy()
    rows = []
    for i in range(count):
        line = stream.readline()
        if not line:
            raise SplatFormatError(f"truncated ASCII vertex data at record {i}")
        tokens = line.split()
        if len(tokens) != len(properties):
            raise SplatFormatError(
                f"record {i} has {len(tokens)} values, expected {len(properties)}")
        rows.append(tokens)
    arr = np.empty(count, dtype=dtype)
    cols = list(zip(*rows)) if rows else [[]] * len(properties)
    for k, (name, typ) in enumerate(properties):
        arr[name] = np.array(cols[k], dtype=np.dtype(typ).base)
    return arr


def load_splats(path, logit=False, c=MIN_CONTRIBUTION):
    """Load and canonicalize a splat scene from a PLY file.

    With ``logit=True`` the opacity and spike-threshold columns are treated
    as pre-sigmoid values and mapped through a sigmoid.  Splats with opacity
    below the minimum rendering contribution ``c`` are dropped (their active
    region is empty); the count is available on ``SplatSet.load_report``.
    """
    with open(path, "rb") as f:
        fmt, count, properties = _parse_header(f)
        names = [p[0] for p in properties]
        for required in CORE_PROPERTIES:
            if required not in names:
                raise SplatFormatError(f"missing required property {required!r}")
        records = _read_records(f, fmt, count, properties)

    def column(name):
        return records[name].astype(np.float64)

    for name in names:
        col = records[name].astype(np.float64)
        bad = ~np.isfinite(col)
        if np.any(bad):
            raise SplatDataError(
                f"non-finite value in property {name!r} at record {int(np.argmax(bad))}")

    means = np.stack([column("x"), column("y"), column("z")], axis=1)
    rotations = np.stack([column(f"rot_{i}") for i in range(4)], axis=1)
    opacity = column("opacity")
    if "spike_threshold" in names:
        spike = column("spike_threshold")
        has_spike = True
    else:
        spike = np.zeros(count)
        has_spike = False

    if logit:
        opacity = _sigmoid(opacity)
        if has_spike:
            spike = _sigmoid(spike)

    bad = (opacity > 1.0 + 1e-6) | (opacity < 0.0)
    if np.any(bad):
        raise SplatDataError(
            f"opacity out of range at record {int(np.argmax(bad))}")
    opacity = np.minimum(opacity, 1.0)
    bad = (spike > 1.0 + 1e-6) | (spike < 0.0)
    if np.any(bad):
        raise SplatDataError(
            f"spike_threshold out of range at record {int(np.argmax(bad))}")
    spike = np.minimum(spike, 1.0)

    if "scale_2" in names:
        scales3 = np.stack([column("scale_0"), column("scale_1"), column("scale_2")],
                           axis=1)
        if np.any(scales3 < 0):
            i = int(np.argmax(np.any(scales3 < 0, axis=1)))
            raise SplatDataError(f"negative scale at record {i}")
        rotations, scales, dropped_mag = drop_third_scale(rotations, scales3)
        kept_max = np.max(scales, axis=1)
        rough = dropped_mag > 1e-3 * np.maximum(kept_max, 1e-300)
        if np.any(rough):
            warnings.warn(
                f"{int(np.count_nonzero(rough))} records carry a third scale above "
                "1e-3 of the kept axes; it was dropped to flatten the kernel",
                stacklevel=2)
    else:
        scales = np.stack([column("scale_0"), column("scale_1")], axis=1)
        if np.any(scales < 0):
            i = int(np.argmax(np.any(scales < 0, axis=1)))
            raise SplatDataError(f"negative scale at record {i}")

    payload_names = [n for n in names
                     if n not in CORE_PROPERTIES and n not in OPTIONAL_PROPERTIES]
    payload = records[payload_names] if payload_names else None

    splats, report = canonicalize(means, rotations, scales, opacity, spike,
                                  payload=payload, c=c,
                                  has_spike_property=has_spike)
    schema_names = [n for n in names if n != "scale_2"]
    schema_types = [properties[names.index(n)][1] for n in schema_names]
    splats.io_schema = PlySchema(schema_names, schema_types)
    splats.load_report = report
    return splats


def _format_ascii_value(value, typ):
    if typ.startswith(("i", "u")):
        return str(int(value))
    if typ == "f4":
        return np.format_float_positional(np.float32(value), unique=True, trim="0")
    return np.format_float_positional(np.float64(value), unique=True, trim="0")


def save_splats(path, splats, fmt="binary", schema=None):
    """Write a SplatSet to PLY, reproducing the source schema when known."""
    if fmt not in ("binary", "ascii"):
        raise ValueError(f"fmt must be 'binary' or 'ascii', got {fmt!r}")
    if schema is None:
        schema = getattr(splats, "io_schema", None)
    if schema is None:
        payload_dtype = splats.payload.dtype if splats.payload is not None else None
        schema = PlySchema.default(has_spike=splats.has_spike_property,
                                   payload_dtype=payload_dtype)

    core = {
        "x": splats.means[:, 0], "y": splats.means[:, 1], "z": splats.means[:, 2],
        "rot_0": splats.rotations[:, 0], "rot_1": splats.rotations[:, 1],
        "rot_2": splats.rotations[:, 2], "rot_3": splats.rotations[:, 3],
        "scale_0": splats.scales[:, 0], "scale_1": splats.scales[:, 1],
        "opacity": splats.opacities, "spike_threshold": splats.spike_thresholds,
    }
    n = len(splats)
    dtype = np.dtype([(name, "<" + typ)
                      for name, typ in zip(schema.names, schema.dtypes)])
    out = np.empty(n, dtype=dtype)
    for name in schema.names:
        if name in core:
            out[name] = core[name]
        elif splats.payload is not None and name in splats.payload.dtype.names:
            out[name] = splats.payload[name]
        else:
            raise SplatFormatError(f"schema property {name!r} has no data source")

    header = io.BytesIO()
    header.write(b"ply\n")
    header.write(b"format ascii 1.0\n" if fmt == "ascii"
                 else b"format binary_little_endian 1.0\n")
    header.write(f"element vertex {n}\n".encode())
    for name, typ in zip(schema.names, schema.dtypes):
        header.write(f"property {_PLY_NAMES[typ]} {name}\n".encode())
    header.write(b"end_header\n")

    with open(path, "wb") as f:
        f.write(header.getvalue())
        if fmt == "binary":
            f.write(out.tobytes())
        else:
            lines = []
            for i in range(n):
                parts = [_format_ascii_value(out[name][i], typ)
                         for name, typ in zip(schema.names, schema.dtypes)]
                lines.append(" ".join(parts))
            f.write(("\n".join(lines) + ("\n" if n else "")).encode())
