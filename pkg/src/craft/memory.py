"""Memory regions with stuck-at faults.

A stuck cell keeps its frozen value regardless of what is written; reads
return the stuck value silently.  Faults are i.i.d. per bit: each cell is
stuck with probability `ber`, and a stuck cell holds 1 with probability
`sa1_fraction` (SA1), otherwise 0 (SA0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bitops import as_bit_array
from .prng import make_rng

PAYLOAD_BITS = 512
AUX_BITS = 6


@dataclass(frozen=True, eq=False)
class FaultMap:
    """Immutable set of stuck cells over a bit-addressed region."""

    region_size_bits: int
    bit_indices: np.ndarray  # int64, strictly ascending
    stuck_values: np.ndarray  # uint8, parallel to bit_indices
    ber: float
    sa1_fraction: float
    seed: int

    def __post_init__(self):
        idx = np.asarray(self.bit_indices, dtype=np.int64)
        val = np.asarray(self.stuck_values, dtype=np.uint8)
        if self.region_size_bits <= 0:
            raise ValueError("fault map region must be non-empty")
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("bit_indices and stuck_values must be parallel 1-D arrays")
        if idx.size:
            # Canonicalize to ascending order so downstream results never
            # depend on how the entries were listed.
            order = np.argsort(idx, kind="stable")
            idx, val = idx[order], val[order]
            if idx[0] < 0 or idx[-1] >= self.region_size_bits:
                raise ValueError("bit index out of region")
            if np.any(np.diff(idx) == 0):
                raise ValueError("duplicate bit index in fault map")
            if val.max() > 1:
                raise ValueError("stuck values must be 0 or 1")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "bit_indices", idx)
        object.__setattr__(self, "stuck_values", val)

    def __len__(self) -> int:
        return int(self.bit_indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FaultMap):
            return NotImplemented
        return (
            self.region_size_bits == other.region_size_bits
            and np.array_equal(self.bit_indices, other.bit_indices)
            and np.array_equal(self.stuck_values, other.stuck_values)
        )

    @property
    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self.bit_indices.tolist(), self.stuck_values.tolist()))

    def slice_range(self, offset: int, length: int) -> tuple[np.ndarray, np.ndarray]:
        """Stuck cells within [offset, offset+length), as (local positions, values)."""
        lo, hi = np.searchsorted(self.bit_indices, [offset, offset + length])
        return self.bit_indices[lo:hi] - offset, self.stuck_values[lo:hi]


@dataclass(frozen=True)
class DataBlock:
    """One 512-bit payload plus its 6 fault-free auxiliary bits.

    The payload is subject to stuck-at faults; the aux bits (remap key,
    invert flag, switch flag) are assumed to live in fault-free storage and
    are never passed through fault application.
    """

    payload: np.ndarray
    aux: np.ndarray = field(default_factory=lambda: np.zeros(AUX_BITS, dtype=np.uint8))

    def __post_init__(self):
        payload = as_bit_array(self.payload, PAYLOAD_BITS)
        aux = as_bit_array(self.aux, AUX_BITS)
        payload.setflags(write=False)
        aux.setflags(write=False)
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "aux", aux)


def generate_fault_map(region_size_bits: int, ber: float, sa1_fraction: float = 0.5,
                       seed: int = 0) -> FaultMap:
    """Draw an i.i.d. stuck-at fault map; deterministic for fixed arguments."""
    if region_size_bits <= 0:
        raise ValueError("fault map region must be non-empty")
    if not 0.0 <= ber <= 1.0:
        raise ValueError(f"ber must be in [0, 1], got {ber}")
    if not 0.0 <= sa1_fraction <= 1.0:
        raise ValueError(f"sa1_fraction must be in [0, 1], got {sa1_fraction}")
    rng = make_rng(seed)
    stuck = rng.random(region_size_bits) < ber
    indices = np.flatnonzero(stuck).astype(np.int64)
    values = (rng.random(indices.size) < sa1_fraction).astype(np.uint8)
    return FaultMap(region_size_bits, indices, values, float(ber), float(sa1_fraction), int(seed))


def _check_bounds(fault_map: FaultMap, offset: int, length: int) -> None:
    if offset < 0 or offset + length > fault_map.region_size_bits:
        raise IndexError(
            f"bit range [{offset}, {offset + length}) outside region of "
            f"{fault_map.region_size_bits} bits"
        )


def apply_faults(desired: np.ndarray, fault_map: FaultMap, offset: int = 0) -> np.ndarray:
    """Readout after writing `desired` at `offset`: stuck cells override.

    `desired` may be batched; faults apply along the last axis, at the same
    positions for every row.
    """
    desired = as_bit_array(desired)
    _check_bounds(fault_map, offset, desired.shape[-1])
    positions, values = fault_map.slice_range(offset, desired.shape[-1])
    readout = desired.copy()
    readout[..., positions] = values
    return readout


def count_mismatches(desired: np.ndarray, fault_map: FaultMap, offset: int = 0) -> int:
    """Number of stuck cells in range whose value differs from the desired bit."""
    desired = as_bit_array(desired)
    _check_bounds(fault_map, offset, desired.shape[-1])
    positions, values = fault_map.slice_range(offset, desired.shape[-1])
    mism = (desired[..., positions] != values).sum(axis=-1)
    return int(mism) if np.ndim(mism) == 0 else mism


def save_fault_map(fault_map: FaultMap, path) -> None:
    """Write the flat text form: header `size ber sa1_fraction seed`, then
    one `bit_index value` pair per line."""
    lines = [f"{fault_map.region_size_bits} {fault_map.ber!r} {fault_map.sa1_fraction!r} {fault_map.seed}"]
    lines.extend(f"{i} {v}" for i, v in fault_map.entries)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_fault_map(path) -> FaultMap:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"malformed fault map header in {path}")
        size, ber, frac, seed = int(header[0]), float(header[1]), float(header[2]), int(header[3])
        pairs = [line.split() for line in fh if line.strip()]
    indices = np.array([int(p[0]) for p in pairs], dtype=np.int64)
    values = np.array([int(p[1]) for p in pairs], dtype=np.uint8)
    return FaultMap(size, indices, values, ber, frac, seed)
