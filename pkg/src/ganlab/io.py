"""Binary and CSV file formats.

Feature file (``.feat``), little-endian::

    "FEAT" | u32 version | u32 count | u32 dim | count*dim f32 | u32 crc32(all previous bytes)

Checkpoint file (``.ganc``), little-endian::

    "GANC" | u32 version | u32 n_sections
    n_sections x ( 4-byte tag | u64 length | payload | u32 crc32(payload) )
    u32 crc32(all previous bytes)

Sections: ARCH (layer tables + batch-norm constants), GPAR/DPAR (flat float64
parameters), GBUF/DBUF (batch-norm running stats), GOPT/DOPT (Adam state),
META (step, seed).
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .metrics import SampleSet
from .nn import MLP, AdamState, LayerSpec

FEATURE_MAGIC = b"FEAT"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"GANC"
CHECKPOINT_VERSION = 1
ACTIVATIONS = ("identity", "relu")


class FormatError(ValueError):
    """A file could not be decoded; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")
        self.offset = offset
        self.path = path


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class Truncated(FormatError):
    pass


class ChecksumMismatch(FormatError):
    def __init__(self, message: str, offset: int, section: str, path=None):
        super().__init__(message, offset, path)
        self.section = section


def atomic_write_bytes(path, data: bytes, force: bool = False):
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str, force: bool = False):
    atomic_write_bytes(path, text.encode("utf-8"), force)


class _Reader:
    def __init__(self, data: bytes, path=None):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"file ends inside {what}: need {n} bytes, {len(self.data) - self.pos} left",
                            self.pos, self.path)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))


def _check_header(r: _Reader, magic: bytes, version: int, kind: str):
    got = r.take(4, "magic")
    if got != magic:
        raise BadMagic(f"not a {kind} file: magic {got!r}, expected {magic!r}", 0, r.path)
    (ver,) = r.unpack("I", "version")
    if ver != version:
        raise UnsupportedVersion(f"{kind} version {ver} not supported (this build reads {version})", 4, r.path)


def _check_trailer(r: _Reader, kind: str):
    body_end = r.pos
    (crc,) = r.unpack("I", "trailing checksum")
    if zlib.crc32(r.data[:body_end]) != crc:
        raise ChecksumMismatch(f"{kind} checksum mismatch", body_end, "file", r.path)
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} unexpected bytes after checksum", r.pos, r.path)


# --- feature files ---------------------------------------------------------------

def encode_features(points) -> bytes:
    pts = np.ascontiguousarray(points.points if isinstance(points, SampleSet) else points, dtype="<f4")
    if pts.ndim != 2:
        raise ValueError("features must be an (n, d) matrix")
    body = FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION, pts.shape[0], pts.shape[1]) + pts.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def decode_features(data: bytes, path=None) -> np.ndarray:
    r = _Reader(data, path)
    _check_header(r, FEATURE_MAGIC, FEATURE_VERSION, "feature")
    count, dim = r.unpack("II", "shape")
    payload_at = r.pos
    raw = r.take(count * dim * 4, "payload")
    _check_trailer(r, "feature")
    del payload_at
    return np.frombuffer(raw, dtype="<f4").reshape(count, dim).astype(np.float32)


def write_features(path, points, force: bool = False):
    atomic_write_bytes(path, encode_features(points), force)


def read_features(path) -> np.ndarray:
    return decode_features(Path(path).read_bytes(), path)


# --- checkpoints ---------------------------------------------------------------------

def _arch_payload(m: MLP) -> bytes:
    out = struct.pack("<Idd", len(m.layers), m.bn_eps, m.bn_momentum)
    for s in m.layers:
        out += struct.pack("<IIBB", s.in_dim, s.out_dim, ACTIVATIONS.index(s.activation), int(s.batch_norm))
    return out


def _read_arch(r: _Reader) -> tuple[list[LayerSpec], float, float]:
    n, eps, mom = r.unpack("Idd", "layer table")
    layers = []
    for _ in range(n):
        a, b, act, bn = r.unpack("IIBB", "layer entry")
        if act >= len(ACTIVATIONS):
            raise FormatError(f"unknown activation code {act}", r.pos - 2)
        layers.append(LayerSpec(a, b, ACTIVATIONS[act], bool(bn)))
    return layers, eps, mom


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _array_list_payload(arrays) -> bytes:
    out = struct.pack("<I", len(arrays))
    for a in arrays:
        out += struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape) + _f64(a)
    return out


def _read_array_list(r: _Reader) -> list[np.ndarray]:
    (n,) = r.unpack("I", "array count")
    out = []
    for _ in range(n):
        (ndim,) = r.unpack("I", "array rank")
        shape = r.unpack(f"{ndim}Q", "array shape")
        size = int(np.prod(shape)) if ndim else 1
        out.append(np.frombuffer(r.take(8 * size, "array data"), dtype="<f8").reshape(shape).astype(np.float64))
    return out


def _adam_payload(s: AdamState) -> bytes:
    out = struct.pack("<ddddQB", s.lr, s.beta1, s.beta2, s.eps, s.t, int(s.m is not None))
    if s.m is not None:
        out += _array_list_payload(s.m) + _array_list_payload(s.v)
    return out


def _read_adam(r: _Reader) -> AdamState:
    lr, b1, b2, eps, t, has = r.unpack("ddddQB", "adam state")
    st = AdamState(lr, b1, b2, eps, t)
    if has:
        st.m = _read_array_list(r)
        st.v = _read_array_list(r)
    return st


def encode_checkpoint(ckpt) -> bytes:
    g, d = ckpt.generator, ckpt.discriminator
    sections = [
        (b"ARCH", _arch_payload(g) + _arch_payload(d)),
        (b"GPAR", _f64(g.flat)),
        (b"GBUF", _array_list_payload(g.buffers())),
        (b"DPAR", _f64(d.flat)),
        (b"DBUF", _array_list_payload(d.buffers())),
        (b"GOPT", _adam_payload(ckpt.gen_opt)),
        (b"DOPT", _adam_payload(ckpt.disc_opt)),
        (b"META", struct.pack("<Qq", ckpt.step, ckpt.seed)),
    ]
    out = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(sections))
    for tag, payload in sections:
        out += tag + struct.pack("<Q", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))
    return out + struct.pack("<I", zlib.crc32(out))


def _build_mlp(layers, eps, mom, flat: np.ndarray, buffers: list[np.ndarray], offset: int) -> MLP:
    m = MLP(layers, bn_eps=eps, bn_momentum=mom)
    if flat.size != m.flat.size:
        raise FormatError(f"parameter blob has {flat.size} values, architecture needs {m.flat.size}", offset)
    m.flat[:] = flat
    bn = [i for i, s in enumerate(layers) if s.batch_norm]
    if len(buffers) != 2 * len(bn):
        raise FormatError("batch-norm buffer count does not match architecture", offset)
    for k, i in enumerate(bn):
        m.running_mean[i] = buffers[2 * k].copy()
        m.running_var[i] = buffers[2 * k + 1].copy()
    return m


def decode_checkpoint(data: bytes, path=None):
    from .synth import GanCheckpoint

    r = _Reader(data, path)
    _check_header(r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")
    (n_sections,) = r.unpack("I", "section count")
    sections: dict[str, tuple[bytes, int]] = {}
    for _ in range(n_sections):
        tag = r.take(4, "section tag").decode("ascii", errors="replace")
        (length,) = r.unpack("Q", f"section {tag} length")
        start = r.pos
        payload = r.take(length, f"section {tag}")
        (crc,) = r.unpack("I", f"section {tag} checksum")
        if zlib.crc32(payload) != crc:
            raise ChecksumMismatch(f"checksum mismatch in section {tag}", start, tag, path)
        sections[tag] = (payload, start)
    _check_trailer(r, "checkpoint")
    for tag in ("ARCH", "GPAR", "GBUF", "DPAR", "DBUF", "GOPT", "DOPT", "META"):
        if tag not in sections:
            raise FormatError(f"missing section {tag}", r.pos, path)

    def sub(tag):
        payload, start = sections[tag]
        sr = _Reader(payload, path)
        return sr, start

    ar, _ = sub("ARCH")
    g_arch = _read_arch(ar)
    d_arch = _read_arch(ar)
    gbuf = _read_array_list(sub("GBUF")[0])
    dbuf = _read_array_list(sub("DBUF")[0])
    gpar, gstart = sections["GPAR"]
    dpar, dstart = sections["DPAR"]
    g = _build_mlp(*g_arch, np.frombuffer(gpar, dtype="<f8"), gbuf, gstart)
    d = _build_mlp(*d_arch, np.frombuffer(dpar, dtype="<f8"), dbuf, dstart)
    step, seed = struct.unpack("<Qq", sections["META"][0])
    return GanCheckpoint(g, d, _read_adam(sub("GOPT")[0]), _read_adam(sub("DOPT")[0]), step, seed)


def write_checkpoint(path, ckpt, force: bool = False):
    atomic_write_bytes(path, encode_checkpoint(ckpt), force)


def read_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes(), path)


# --- CSV ------------------------------------------------------------------------------

def fmt(x) -> str:
    """Shortest text that round-trips a float exactly."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_points_csv(path, points, force: bool = False):
    pts = points.points if isinstance(points, SampleSet) else np.asarray(points)
    header = [f"x{j}" for j in range(pts.shape[1])]
    atomic_write_text(path, csv_text(header, pts.tolist()), force)


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError("empty CSV", 0, path)
    try:
        data = [[float(v) for v in r] for r in rows[1:] if r]
    except ValueError as e:
        raise FormatError(f"non-numeric CSV cell: {e}", 0, path) from None
    d = len(rows[0])
    if any(len(r) != d for r in data):
        raise FormatError("ragged CSV rows", 0, path)
    return np.array(data, dtype=np.float64).reshape(len(data), d)


def read_points(path) -> np.ndarray:
    """Load a point set from ``.feat`` or ``.csv``."""
    p = Path(path)
    if p.suffix == ".csv":
        return read_points_csv(p)
    return read_features(p).astype(np.float64)
