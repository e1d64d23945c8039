"""Net-deviation objective and the per-block encoding search.

The quality of a stored block is judged by net deviation: the sum over the
block's weights of |readout value - original value|.  For a given fault
map the best encoding is found by brute force over the (sub)space of
configurations, simulating store -> faulty readout -> decode for each one
and keeping the argmin (ties go to the smallest aux code).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .bitops import as_bit_array, bytes_from_bits, f32_from_bits
from .codecs import ALL_CONFIGS, PAYLOAD_BITS, EncodingConfig, Precision, encode
from .memory import FaultMap, apply_faults

#: Delta contributed by a non-finite float32 readout weight.  Just above
#: float32 max, so a config producing NaN/Inf loses to any finite one.
NONFINITE_SENTINEL = 2.0 ** 128


@dataclass(frozen=True)
class WeightView:
    """How a block's bits are read as numeric weights.

    fp32 blocks are 16 IEEE floats; u8 blocks are 64 quantized codes with
    value scale * (code - zero_point).
    """

    precision: Precision
    scale: float | None = None
    zero_point: int | None = None

    def __post_init__(self):
        if self.precision is Precision.U8:
            if self.scale is None or self.zero_point is None:
                raise ValueError("u8 views require scale and zero_point")
            if self.scale <= 0:
                raise ValueError("scale must be positive")
            if not 0 <= self.zero_point <= 255:
                raise ValueError("zero_point must be in [0, 255]")
        elif self.scale is not None or self.zero_point is not None:
            raise ValueError("fp32 views take no quantization parameters")


def deviation(original: np.ndarray, readout: np.ndarray, view: WeightView):
    """Net deviation between two blocks under a weight view.

    For u8 the result is computed as scale times the exact integer sum of
    absolute code differences (equal to the dequantized sum, rounded once).
    For fp32, differences are taken in float64 and any non-finite readout
    weight contributes :data:`NONFINITE_SENTINEL`.  Originals are normally
    finite (trained weights); a non-finite original also falls back to the
    sentinel so comparisons stay total and deterministic.

    `readout` may be batched (configs on leading axes); a matching array of
    deltas is returned, a plain float for single blocks.
    """
    original = as_bit_array(original, PAYLOAD_BITS)
    readout = as_bit_array(readout, PAYLOAD_BITS)
    if view.precision is Precision.U8:
        qo = bytes_from_bits(original).astype(np.int64)
        qr = bytes_from_bits(readout).astype(np.int64)
        delta = view.scale * np.abs(qr - qo).sum(axis=-1)
    else:
        # Blocks are arbitrary bit patterns; signaling NaNs and inf-inf are
        # expected here and resolved through the sentinel.
        with np.errstate(invalid="ignore"):
            wo32 = f32_from_bits(original)
            wr32 = f32_from_bits(readout)
            diff = np.abs(wr32.astype(np.float64) - wo32.astype(np.float64))
            diff = np.where(np.isfinite(wr32) & np.isfinite(wo32),
                            diff, NONFINITE_SENTINEL)
        delta = diff.sum(axis=-1)
    return float(delta) if np.ndim(delta) == 0 else delta


@dataclass(frozen=True)
class DeviationReport:
    """Per-config deltas from an encoding search, in search order."""

    configs: tuple[EncodingConfig, ...]
    deltas: np.ndarray  # float64, parallel to configs
    best_index: int

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=np.float64)
        d.setflags(write=False)
        object.__setattr__(self, "deltas", d)

    @property
    def best_config(self) -> EncodingConfig:
        return self.configs[self.best_index]

    @property
    def best_delta(self) -> float:
        return float(self.deltas[self.best_index])

    def to_csv(self) -> str:
        lines = ["config_hex,delta"]
        lines.extend(f"{c.aux_code:02x},{float(d)!r}" for c, d in zip(self.configs, self.deltas))
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=None)
def _gathers(precision: Precision) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-config permutation tables for the vectorized search.

    encode(x, c) == x[enc[c]] ^ inv[c] and decode(y, c) == y[dec[c]] ^ inv[c]:
    the inversion commutes with the bit permutations, so each config is a
    gather plus an optional complement.
    """
    identity = np.arange(PAYLOAD_BITS)
    enc = np.empty((len(ALL_CONFIGS), PAYLOAD_BITS), dtype=np.intp)
    dec = np.empty_like(enc)
    inv = np.empty(len(ALL_CONFIGS), dtype=np.uint8)
    for i, cfg in enumerate(ALL_CONFIGS):
        enc[i] = _permute(identity, cfg, precision, encode_side=True)
        dec[i] = _permute(identity, cfg, precision, encode_side=False)
        inv[i] = 1 if cfg.invert else 0
    enc.setflags(write=False)
    dec.setflags(write=False)
    inv.setflags(write=False)
    return enc, dec, inv


def _permute(identity: np.ndarray, cfg: EncodingConfig, precision: Precision,
             encode_side: bool) -> np.ndarray:
    """Gather indices realizing the permutation part of encode or decode."""
    slots = identity.reshape(16, 32)
    if encode_side:
        out = slots[np.arange(16) ^ cfg.xor_key, :].reshape(-1)
        if cfg.switch:
            width = precision.word_bits
            out = np.roll(out.reshape(-1, width), precision.rotation, axis=-1).reshape(-1)
    else:
        out = identity
        if cfg.switch:
            width = precision.word_bits
            out = np.roll(out.reshape(-1, width), -precision.rotation, axis=-1).reshape(-1)
        out = out.reshape(16, 32)[np.arange(16) ^ cfg.xor_key, :].reshape(-1)
    return out


def search_best_encoding(original: np.ndarray, fault_map: FaultMap, offset: int,
                         view: WeightView,
                         configs: Sequence[EncodingConfig] | None = None) -> DeviationReport:
    """Exhaustively evaluate every config and pick the minimal-deviation one.

    For each config the stored block is encode(original), reads back through
    the fault map, and is decoded; the reported delta is the deviation of
    that readback from the original.  Ties break toward the smallest aux
    code, so identical inputs always produce identical reports.
    """
    original = as_bit_array(original, PAYLOAD_BITS)
    if original.ndim != 1:
        raise ValueError("search operates on a single block")
    if configs is None:
        configs = ALL_CONFIGS
    configs = tuple(configs)
    if not configs:
        raise ValueError("search needs at least one config")
    codes = np.array([c.aux_code for c in configs])
    enc, dec, inv = _gathers(view.precision)
    inv_col = inv[codes, None]
    stored = original[enc[codes]] ^ inv_col
    stored = apply_faults(stored, fault_map, offset)
    readback = np.take_along_axis(stored, dec[codes], axis=1) ^ inv_col
    deltas = np.asarray(deviation(original, readback, view), dtype=np.float64)
    minimal = np.flatnonzero(deltas == deltas.min())
    best = int(minimal[np.argmin(codes[minimal])])
    return DeviationReport(configs=configs, deltas=deltas, best_index=best)


def write_with_craft(original: np.ndarray, fault_map: FaultMap, offset: int,
                     view: WeightView,
                     configs: Sequence[EncodingConfig] | None = None,
                     ) -> tuple[np.ndarray, np.ndarray, float]:
    """Store a block with the best encoding for its stuck cells.

    Returns the stored payload as the memory will hold it (encoded, with
    stuck cells overriding), the 6 aux bits recording the chosen config,
    and the achieved net deviation.
    """
    report = search_best_encoding(original, fault_map, offset, view, configs)
    best = report.best_config
    stored = apply_faults(encode(original, best, view.precision), fault_map, offset)
    return stored, best.aux(), report.best_delta
