"""Trace sets, the SCAT container, subsampling and standardization.

SCAT layout (little-endian, no padding)::

    "SCAT" | version u16 | role u8 | target_byte u8 | N u64 | D u64
    | samples N*D f32 | plaintexts N*16 u8 | keys N*16 u8
    | descriptor length u32 | descriptor UTF-8

A soft-labeled sidecar appends a "SOFT" block (c u32 | N u64 | N*c f32) and,
for augmented sets, an optional "PAIR" block (M u64 | M*2 u64 parent indices
| M f64 mixing weights) describing which rows were generated.
"""
from __future__ import annotations

import dataclasses
import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SCAT"
SOFT_MAGIC = b"SOFT"
PAIR_MAGIC = b"PAIR"
VERSION = 1
STD_EPS = 1e-12

_HEADER = struct.Struct("<4sHBBQQ")
ROLES = ("profiling", "attack")


class FormatError(ValueError):
    """File does not follow the container format."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class InvariantError(ValueError):
    """A trace set violates its structural invariants."""


@dataclass(frozen=True, eq=False)
class TraceSet:
    traces: np.ndarray
    plaintexts: np.ndarray
    keys: np.ndarray
    role: str = "profiling"
    target_byte: int = 2
    descriptor: str = ""

    def __post_init__(self):
        traces = np.asarray(self.traces, dtype=np.float64)
        if traces.ndim == 1 and traces.size == 0:
            traces = traces.reshape(0, 0)
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "plaintexts", np.asarray(self.plaintexts, dtype=np.uint8))
        object.__setattr__(self, "keys", np.asarray(self.keys, dtype=np.uint8))
        self.traces.setflags(write=False)
        self.plaintexts.setflags(write=False)
        self.keys.setflags(write=False)

    @property
    def n_traces(self) -> int:
        return self.traces.shape[0]

    @property
    def n_samples(self) -> int:
        return self.traces.shape[1]

    def __len__(self):
        return self.n_traces

    @property
    def target_plaintexts(self) -> np.ndarray:
        return self.plaintexts[:, self.target_byte]

    @property
    def target_keys(self) -> np.ndarray:
        return self.keys[:, self.target_byte]

    @property
    def true_key(self) -> int:
        """The fixed key byte of an attack set."""
        if self.n_traces == 0:
            raise InvariantError("empty set has no key")
        return int(self.keys[0, self.target_byte])

    def validate(self) -> "TraceSet":
        t = self.traces
        if t.ndim != 2:
            raise InvariantError(f"traces must be 2-D, got shape {t.shape}")
        n, d = t.shape
        if d < 1:
            raise InvariantError("traces need at least one sample (D >= 1)")
        if self.plaintexts.shape != (n, 16):
            raise InvariantError(f"plaintexts shape {self.plaintexts.shape} != ({n}, 16)")
        if self.keys.shape != (n, 16):
            raise InvariantError(f"keys shape {self.keys.shape} != ({n}, 16)")
        if self.role not in ROLES:
            raise InvariantError(f"unknown role {self.role!r}")
        if not 0 <= self.target_byte <= 15:
            raise InvariantError(f"target byte {self.target_byte} outside 0..15")
        if not np.all(np.isfinite(t)):
            raise InvariantError("traces contain non-finite samples")
        if self.role == "attack" and n and np.any(self.keys != self.keys[0]):
            raise InvariantError("attack set must use a single fixed key")
        return self

    def take(self, idx) -> "TraceSet":
        idx = np.asarray(idx, dtype=np.int64)
        return dataclasses.replace(
            self, traces=self.traces[idx], plaintexts=self.plaintexts[idx], keys=self.keys[idx]
        )

    def with_traces(self, traces: np.ndarray) -> "TraceSet":
        return dataclasses.replace(self, traces=traces)

    def equals(self, other: "TraceSet") -> bool:
        return (
            self.role == other.role
            and self.target_byte == other.target_byte
            and self.descriptor == other.descriptor
            and self.traces.shape == other.traces.shape
            and np.array_equal(self.traces, other.traces)
            and np.array_equal(self.plaintexts, other.plaintexts)
            and np.array_equal(self.keys, other.keys)
        )


@dataclass(frozen=True)
class SoftLabels:
    """Soft targets for a trace set, plus the provenance of generated rows."""

    probs: np.ndarray
    parents: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    lambdas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float64))


# -- serialization ---------------------------------------------------------


def _write_scat(fh, ts: TraceSet) -> None:
    n, d = ts.traces.shape
    fh.write(_HEADER.pack(MAGIC, VERSION, ROLES.index(ts.role), ts.target_byte, n, d))
    fh.write(np.ascontiguousarray(ts.traces, dtype="<f4").tobytes())
    fh.write(np.ascontiguousarray(ts.plaintexts, dtype=np.uint8).tobytes())
    fh.write(np.ascontiguousarray(ts.keys, dtype=np.uint8).tobytes())
    desc = ts.descriptor.encode("utf-8")
    fh.write(struct.pack("<I", len(desc)))
    fh.write(desc)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def _read_scat(fh) -> TraceSet:
    head = fh.read(_HEADER.size)
    if len(head) < 4 or head[:4] != MAGIC:
        raise BadMagicError(f"bad magic {head[:4]!r}, expected {MAGIC!r}")
    if len(head) != _HEADER.size:
        raise TruncatedError("truncated header")
    _, version, role, target, n, d = _HEADER.unpack(head)
    if version != VERSION:
        raise VersionError(f"unsupported SCAT version {version}")
    if role >= len(ROLES):
        raise FormatError(f"bad role code {role}")
    samples = np.frombuffer(_read_exact(fh, 4 * n * d, "sample matrix"), dtype="<f4")
    pts = np.frombuffer(_read_exact(fh, 16 * n, "plaintexts"), dtype=np.uint8)
    keys = np.frombuffer(_read_exact(fh, 16 * n, "keys"), dtype=np.uint8)
    (dlen,) = struct.unpack("<I", _read_exact(fh, 4, "descriptor length"))
    desc = _read_exact(fh, dlen, "descriptor").decode("utf-8")
    ts = TraceSet(
        traces=samples.reshape(n, d).astype(np.float64),
        plaintexts=pts.reshape(n, 16).copy(),
        keys=keys.reshape(n, 16).copy(),
        role=ROLES[role],
        target_byte=target,
        descriptor=desc,
    )
    return ts.validate()


def save_trace_set(ts: TraceSet, path) -> None:
    ts.validate()
    with open(path, "wb") as fh:
        _write_scat(fh, ts)


def load_trace_set(path) -> TraceSet:
    with open(path, "rb") as fh:
        return _read_scat(fh)


def dumps(ts: TraceSet) -> bytes:
    ts.validate()
    buf = io.BytesIO()
    _write_scat(buf, ts)
    return buf.getvalue()


def loads(data: bytes) -> TraceSet:
    return _read_scat(io.BytesIO(data))


def save_soft_set(ts: TraceSet, soft: SoftLabels, path) -> None:
    """Write a SCAT block followed by SOFT (and PAIR when rows were generated)."""
    ts.validate()
    probs = np.asarray(soft.probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != ts.n_traces:
        raise InvariantError(f"soft labels shape {probs.shape} does not match {ts.n_traces} traces")
    with open(path, "wb") as fh:
        _write_scat(fh, ts)
        n, c = probs.shape
        fh.write(SOFT_MAGIC + struct.pack("<IQ", c, n))
        fh.write(np.ascontiguousarray(probs, dtype="<f4").tobytes())
        m = len(soft.lambdas)
        if m:
            fh.write(PAIR_MAGIC + struct.pack("<Q", m))
            fh.write(np.ascontiguousarray(soft.parents, dtype="<u8").tobytes())
            fh.write(np.ascontiguousarray(soft.lambdas, dtype="<f8").tobytes())


def load_soft_set(path) -> tuple[TraceSet, SoftLabels]:
    with open(path, "rb") as fh:
        ts = _read_scat(fh)
        magic = fh.read(4)
        if magic != SOFT_MAGIC:
            raise BadMagicError(f"expected SOFT block, found {magic!r}")
        c, n = struct.unpack("<IQ", _read_exact(fh, 12, "SOFT header"))
        if n != ts.n_traces:
            raise InvariantError(f"SOFT block has {n} rows, SCAT block has {ts.n_traces}")
        probs = np.frombuffer(_read_exact(fh, 4 * n * c, "soft labels"), dtype="<f4")
        probs = probs.reshape(n, c).astype(np.float64)
        parents = np.zeros((0, 2), dtype=np.int64)
        lambdas = np.zeros(0, dtype=np.float64)
        magic = fh.read(4)
        if magic == PAIR_MAGIC:
            (m,) = struct.unpack("<Q", _read_exact(fh, 8, "PAIR header"))
            parents = np.frombuffer(_read_exact(fh, 16 * m, "parents"), dtype="<u8")
            parents = parents.reshape(m, 2).astype(np.int64)
            lambdas = np.frombuffer(_read_exact(fh, 8 * m, "lambdas"), dtype="<f8").copy()
        elif magic:
            raise FormatError(f"unexpected trailing block {magic!r}")
    return ts, SoftLabels(probs, parents, lambdas)


def is_soft_file(path) -> bool:
    """True when the file carries a SOFT block after its SCAT block."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if head[:4] != MAGIC or len(head) != _HEADER.size:
            return False
        *_, n, d = _HEADER.unpack(head)
        fh.seek(_HEADER.size + 4 * n * d + 32 * n)
        raw = fh.read(4)
        if len(raw) != 4:
            return False
        (dlen,) = struct.unpack("<I", raw)
        fh.seek(dlen, os.SEEK_CUR)
        return fh.read(4) == SOFT_MAGIC


# -- sampling and preprocessing ---------------------------------------------


def subsample(ts: TraceSet, n: int, seed: int) -> TraceSet:
    """Draw ``n`` rows uniformly without replacement (prefix of a seeded shuffle)."""
    if not 0 <= n <= ts.n_traces:
        raise ValueError(f"cannot draw {n} traces from a set of {ts.n_traces}")
    idx = np.random.default_rng(seed).permutation(ts.n_traces)[:n]
    return ts.take(idx)


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, traces: np.ndarray) -> np.ndarray:
        return (np.asarray(traces, dtype=np.float64) - self.mean) / self.std


def compute_stats(ts: "TraceSet | np.ndarray") -> StandardizationStats:
    x = ts.traces if isinstance(ts, TraceSet) else np.asarray(ts, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("need at least two traces to estimate statistics")
    mean = x.mean(axis=0)
    constant = np.all(x == x[0], axis=0)
    # exact mean on constant columns so they standardize to exactly zero
    mean[constant] = x[0, constant]
    return StandardizationStats(mean, np.maximum(x.std(axis=0), STD_EPS))


def standardize(ts: TraceSet, stats: StandardizationStats) -> TraceSet:
    if stats.mean.shape != (ts.n_samples,):
        raise ValueError("statistics do not match the trace length")
    return ts.with_traces(stats.apply(ts.traces))
