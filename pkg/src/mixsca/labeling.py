"""AES Sbox, Hamming weight and leakage-model labels."""
from __future__ import annotations

import enum

import numpy as np

# fmt: off
SBOX = np.array([
    0x63, 0x7C, 0x77, 0x7B, 0xF2, 0x6B, 0x6F, 0xC5, 0x30, 0x01, 0x67, 0x2B, 0xFE, 0xD7, 0xAB, 0x76,
    0xCA, 0x82, 0xC9, 0x7D, 0xFA, 0x59, 0x47, 0xF0, 0xAD, 0xD4, 0xA2, 0xAF, 0x9C, 0xA4, 0x72, 0xC0,
    0xB7, 0xFD, 0x93, 0x26, 0x36, 0x3F, 0xF7, 0xCC, 0x34, 0xA5, 0xE5, 0xF1, 0x71, 0xD8, 0x31, 0x15,
    0x04, 0xC7, 0x23, 0xC3, 0x18, 0x96, 0x05, 0x9A, 0x07, 0x12, 0x80, 0xE2, 0xEB, 0x27, 0xB2, 0x75,
    0x09, 0x83, 0x2C, 0x1A, 0x1B, 0x6E, 0x5A, 0xA0, 0x52, 0x3B, 0xD6, 0xB3, 0x29, 0xE3, 0x2F, 0x84,
    0x53, 0xD1, 0x00, 0xED, 0x20, 0xFC, 0xB1, 0x5B, 0x6A, 0xCB, 0xBE, 0x39, 0x4A, 0x4C, 0x58, 0xCF,
    0xD0, 0xEF, 0xAA, 0xFB, 0x43, 0x4D, 0x33, 0x85, 0x45, 0xF9, 0x02, 0x7F, 0x50, 0x3C, 0x9F, 0xA8,
    0x51, 0xA3, 0x40, 0x8F, 0x92, 0x9D, 0x38, 0xF5, 0xBC, 0xB6, 0xDA, 0x21, 0x10, 0xFF, 0xF3, 0xD2,
    0xCD, 0x0C, 0x13, 0xEC, 0x5F, 0x97, 0x44, 0x17, 0xC4, 0xA7, 0x7E, 0x3D, 0x64, 0x5D, 0x19, 0x73,
    0x60, 0x81, 0x4F, 0xDC, 0x22, 0x2A, 0x90, 0x88, 0x46, 0xEE, 0xB8, 0x14, 0xDE, 0x5E, 0x0B, 0xDB,
    0xE0, 0x32, 0x3A, 0x0A, 0x49, 0x06, 0x24, 0x5C, 0xC2, 0xD3, 0xAC, 0x62, 0x91, 0x95, 0xE4, 0x79,
    0xE7, 0xC8, 0x37, 0x6D, 0x8D, 0xD5, 0x4E, 0xA9, 0x6C, 0x56, 0xF4, 0xEA, 0x65, 0x7A, 0xAE, 0x08,
    0xBA, 0x78, 0x25, 0x2E, 0x1C, 0xA6, 0xB4, 0xC6, 0xE8, 0xDD, 0x74, 0x1F, 0x4B, 0xBD, 0x8B, 0x8A,
    0x70, 0x3E, 0xB5, 0x66, 0x48, 0x03, 0xF6, 0x0E, 0x61, 0x35, 0x57, 0xB9, 0x86, 0xC1, 0x1D, 0x9E,
    0xE1, 0xF8, 0x98, 0x11, 0x69, 0xD9, 0x8E, 0x94, 0x9B, 0x1E, 0x87, 0xE9, 0xCE, 0x55, 0x28, 0xDF,
    0x8C, 0xA1, 0x89, 0x0D, 0xBF, 0xE6, 0x42, 0x68, 0x41, 0x99, 0x2D, 0x0F, 0xB0, 0x54, 0xBB, 0x16,
], dtype=np.uint8)
# fmt: on

HW = np.array([bin(x).count("1") for x in range(256)], dtype=np.uint8)


def _gf_mul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a = ((a << 1) ^ 0x11B) if a & 0x80 else (a << 1)
        b >>= 1
    return r


def _gf_inv(a: int) -> int:
    # a^254 = a^-1 in GF(2^8); 0 maps to 0
    r, p, e = 1, a, 254
    while e:
        if e & 1:
            r = _gf_mul(r, p)
        p = _gf_mul(p, p)
        e >>= 1
    return r if a else 0


def computed_sbox() -> np.ndarray:
    """Build the Sbox from its algebraic definition (GF(2^8) inverse + affine map)."""
    out = np.empty(256, dtype=np.uint8)
    for x in range(256):
        b = _gf_inv(x)
        s = b
        for shift in range(1, 5):
            s ^= ((b << shift) | (b >> (8 - shift))) & 0xFF
        out[x] = s ^ 0x63
    return out


if not np.array_equal(SBOX, computed_sbox()):  # pragma: no cover
    raise RuntimeError("AES Sbox table does not match its algebraic definition")


class LeakageModel(enum.Enum):
    ID = "ID"
    HW = "HW"
    LSB = "LSB"

    @property
    def n_classes(self) -> int:
        return {"ID": 256, "HW": 9, "LSB": 2}[self.value]

    @classmethod
    def parse(cls, name: "str | LeakageModel") -> "LeakageModel":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            raise ValueError(f"unknown leakage model {name!r}; expected ID, HW or LSB") from None


def sbox(x):
    """AES forward Sbox. Accepts an int or an integer array."""
    if isinstance(x, (int, np.integer)):
        return int(SBOX[int(x) & 0xFF])
    return SBOX[np.asarray(x, dtype=np.uint8)]


def hamming_weight(x):
    if isinstance(x, (int, np.integer)):
        return int(HW[int(x) & 0xFF])
    return HW[np.asarray(x, dtype=np.uint8)]


def apply_model(z, model: LeakageModel):
    """Map intermediate value(s) z to class indices under ``model``."""
    model = LeakageModel.parse(model)
    z = np.asarray(z, dtype=np.uint8)
    if model is LeakageModel.ID:
        out = z.astype(np.int64)
    elif model is LeakageModel.HW:
        out = HW[z].astype(np.int64)
    else:
        out = (z & 1).astype(np.int64)
    return out


def compute_label(p, k, model: LeakageModel):
    """Label of Sbox(p ^ k). Scalars in give an int out, arrays give an int64 array."""
    scalar = isinstance(p, (int, np.integer)) and isinstance(k, (int, np.integer))
    z = SBOX[np.bitwise_xor(np.asarray(p, dtype=np.uint8), np.asarray(k, dtype=np.uint8))]
    out = apply_model(z, model)
    return int(out) if scalar else out


def label_table(model: LeakageModel) -> np.ndarray:
    """(256, 256) table whose [p, k] entry is the label of Sbox(p ^ k)."""
    p = np.arange(256, dtype=np.uint8)[:, None]
    k = np.arange(256, dtype=np.uint8)[None, :]
    return compute_label(p, k, model)


def one_hot(labels, c: int) -> np.ndarray:
    """One-hot encode a label or an array of labels into float64 rows of width c."""
    arr = np.asarray(labels, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= c):
        raise ValueError(f"label out of range for {c} classes")
    out = np.zeros(arr.shape + (c,), dtype=np.float64)
    np.put_along_axis(out, arr[..., None], 1.0, axis=-1)
    return out
