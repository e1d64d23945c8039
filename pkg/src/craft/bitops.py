"""Bit-sequence helpers shared across the package.

A bit sequence is a numpy uint8 array of 0/1 values along the last axis.
Bit index i lives in byte i // 8 at in-byte position i % 8 (LSB first), and
bytes are externalized in ascending address order.  For a W-bit word stored
little-endian this makes bit index w * W + k the k-th significance bit of
word w, so word values can be recovered with plain byte views.
"""

from __future__ import annotations

import numpy as np


def bits_from_bytes(data: bytes | np.ndarray) -> np.ndarray:
    """Expand raw bytes into a 0/1 bit array (LSB of byte 0 first)."""
    arr = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data, dtype=np.uint8)
    return np.unpackbits(arr, axis=-1, bitorder="little")


def bytes_from_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a 0/1 bit array into bytes along the last axis."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] % 8 != 0:
        raise ValueError(f"bit count {bits.shape[-1]} is not a whole number of bytes")
    return np.packbits(bits, axis=-1, bitorder="little")


def bits_from_u32(words: np.ndarray) -> np.ndarray:
    """Bit array for an array of 32-bit words (last axis expands 32x)."""
    w = np.ascontiguousarray(words, dtype="<u4")
    return bits_from_bytes(w.view(np.uint8).reshape(w.shape[:-1] + (w.shape[-1] * 4,)))


def u32_from_bits(bits: np.ndarray) -> np.ndarray:
    raw = np.ascontiguousarray(bytes_from_bits(bits))
    return raw.view("<u4").reshape(raw.shape[:-1] + (raw.shape[-1] // 4,))


def bits_from_f32(values: np.ndarray) -> np.ndarray:
    """Bit array for an array of float32 values (preserves NaN payloads)."""
    v = np.ascontiguousarray(values, dtype="<f4")
    return bits_from_bytes(v.view(np.uint8).reshape(v.shape[:-1] + (v.shape[-1] * 4,)))


def f32_from_bits(bits: np.ndarray) -> np.ndarray:
    raw = np.ascontiguousarray(bytes_from_bits(bits))
    return raw.view("<f4").reshape(raw.shape[:-1] + (raw.shape[-1] // 4,))


def hex_from_bits(bits: np.ndarray) -> str:
    """Hex string of the externalized bytes (1-D input only)."""
    packed = bytes_from_bits(np.asarray(bits))
    if packed.ndim != 1:
        raise ValueError("hex_from_bits expects a single bit sequence")
    return packed.tobytes().hex()


def bits_from_hex(text: str) -> np.ndarray:
    return bits_from_bytes(bytes.fromhex(text))


def as_bit_array(bits, length: int | None = None) -> np.ndarray:
    """Validate and canonicalize a 0/1 sequence to a uint8 array."""
    arr = np.asarray(bits, dtype=np.uint8)
    if length is not None and arr.shape[-1] != length:
        raise ValueError(f"expected {length} bits, got {arr.shape[-1]}")
    if arr.size and arr.max() > 1:
        raise ValueError("bit array may only contain 0 and 1")
    return arr
