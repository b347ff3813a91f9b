"""Synthetic first-round AES power traces.

The aligned model is ``a * HW(Sbox(p ^ k)) + b`` on a window of samples and
``b`` elsewhere, plus white Gaussian noise. Hiding countermeasures are layered
on top: a circular desynchronization within a window and random delays
(flat-hold segments that push the rest of the trace to the right).

Randomness is drawn per block of ``BLOCK`` traces from a stream keyed by
``(seed, block index)``, so generating a set in pieces gives the same traces
as generating it at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .labeling import HW, SBOX
from .tracestore import TraceSet

BLOCK = 1024


@dataclass(frozen=True)
class RandomDelay:
    max_delays: int
    delay_len: int


@dataclass(frozen=True)
class SimConfig:
    n_traces: int = 10000
    n_samples: int = 100
    target_byte: int = 2
    true_key: tuple = tuple(range(0x00, 0x100, 0x11))[:16]
    leak_center: int = 40
    leak_width: int = 1
    leak_gain: float = 1.0
    leak_offset: float = 0.0
    noise_sigma: float = 1.0
    desync_window: int = 0
    random_delay: RandomDelay | None = None
    seed: int = 0
    role: str = "profiling"
    vary_key: bool = False
    descriptor: str = field(default="synthetic", compare=False)

    def validate(self) -> "SimConfig":
        if self.n_traces < 0:
            raise ValueError("n_traces must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if len(self.true_key) != 16 or any(not 0 <= int(b) <= 255 for b in self.true_key):
            raise ValueError("true_key must be 16 bytes")
        if not 0 <= self.target_byte <= 15:
            raise ValueError("target_byte must be in 0..15")
        if self.leak_width < 1 or self.leak_center < 0:
            raise ValueError("leak window must be non-empty and start at a valid sample")
        if self.leak_center + self.leak_width > self.n_samples:
            raise ValueError("leak window exceeds the trace length")
        if not 0 <= self.desync_window < self.n_samples:
            raise ValueError("desync window must satisfy 0 <= W < D")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.leak_gain == 0:
            raise ValueError("leak gain must be non-zero")
        if self.role not in ("profiling", "attack"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "attack" and self.vary_key:
            raise ValueError("attack sets use a single fixed key")
        rd = self.random_delay
        if rd is not None and (rd.max_delays < 0 or rd.delay_len < 0):
            raise ValueError("random delay parameters must be >= 0")
        return self


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & (2**64 - 1), block])))


def shift_traces(traces: np.ndarray, shifts) -> np.ndarray:
    """Circularly shift each row right by its own amount."""
    traces = np.asarray(traces, dtype=np.float64)
    n, d = traces.shape
    shifts = np.asarray(shifts, dtype=np.int64).reshape(n, 1)
    idx = (np.arange(d)[None, :] - shifts) % d
    return np.take_along_axis(traces, idx, axis=1)


def _simulate_block(cfg: SimConfig, start: int, count: int):
    rng = _block_rng(cfg.seed, start // BLOCK)
    d = cfg.n_samples
    pts = rng.integers(0, 256, size=(count, 16), dtype=np.uint8)
    if cfg.vary_key:
        keys = rng.integers(0, 256, size=(count, 16), dtype=np.uint8)
    else:
        keys = np.tile(np.asarray(cfg.true_key, dtype=np.uint8), (count, 1))
    noise = rng.standard_normal((count, d))
    shifts = rng.integers(0, cfg.desync_window + 1, size=count)
    rd = cfg.random_delay
    if rd is not None and rd.max_delays > 0:
        n_delays = rng.integers(0, rd.max_delays + 1, size=count)
        positions = rng.integers(0, d, size=(count, rd.max_delays))

    t = cfg.target_byte
    hw = HW[SBOX[pts[:, t] ^ keys[:, t]]].astype(np.float64)
    x = np.full((count, d), float(cfg.leak_offset))
    lo, hi = cfg.leak_center, cfg.leak_center + cfg.leak_width
    x[:, lo:hi] += cfg.leak_gain * hw[:, None]
    if cfg.noise_sigma > 0:
        x += cfg.noise_sigma * noise
    if cfg.desync_window > 0:
        x = shift_traces(x, shifts)
    if rd is not None and rd.max_delays > 0 and rd.delay_len > 0:
        x = kernels.insert_delays(x, positions, n_delays, rd.delay_len)
    return x, pts, keys


def simulate(cfg: SimConfig) -> TraceSet:
    """Generate a trace set. Samples are rounded to float32, the on-disk precision."""
    cfg.validate()
    parts = [
        _simulate_block(cfg, s, min(BLOCK, cfg.n_traces - s)) for s in range(0, cfg.n_traces, BLOCK)
    ]
    if parts:
        x = np.concatenate([p[0] for p in parts])
        pts = np.concatenate([p[1] for p in parts])
        keys = np.concatenate([p[2] for p in parts])
    else:
        x = np.zeros((0, cfg.n_samples))
        pts = keys = np.zeros((0, 16), dtype=np.uint8)
    x = x.astype(np.float32).astype(np.float64)
    return TraceSet(x, pts, keys, role=cfg.role, target_byte=cfg.target_byte,
                    descriptor=cfg.descriptor).validate()


def apply_desync(ts: TraceSet, window: int, seed: int) -> TraceSet:
    """Shift every trace circularly by an independent uniform draw in [0, window]."""
    if not 0 <= window < ts.n_samples:
        raise ValueError(f"desync window {window} must satisfy 0 <= W < D={ts.n_samples}")
    if window == 0:
        return ts
    shifts = np.random.default_rng(seed).integers(0, window + 1, size=ts.n_traces)
    return ts.with_traces(shift_traces(ts.traces, shifts))
