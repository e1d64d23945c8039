"""Monte Carlo fault-injection experiments.

Sweeps inject stuck-at faults into a model's flattened weight blocks at a
grid of bit error rates, apply a protection scheme per block, and measure
classification error and total net deviation.  Trials are paired: at a
given (ber, trial index) every scheme sees the identical fault map, so
scheme comparisons are exact rather than statistical.  All randomness
derives from base_seed + trial_index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codecs import (PAYLOAD_BITS, EncodingConfig, REMAP_INVERT_CONFIGS,
                     decode, ecp_correct)
from .memory import FaultMap, apply_faults, generate_fault_map
from .nn import MlpModel, QuantizedModel, accuracy
from .objective import deviation, write_with_craft
from .prng import make_rng, trial_seed
from .weightfile import BlockLayout, flatten_model, unflatten_model

DEFAULT_SA1_FRACTION = 0.5


@dataclass(frozen=True)
class Scheme:
    """Per-block protection strategy applied during a trial."""

    kind: str
    ecp_n: int = 1

    KINDS = ("baseline", "ecp", "remap_invert", "craft")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scheme {self.kind!r}")
        if self.kind == "ecp" and self.ecp_n < 1:
            raise ValueError("ecp needs at least one pointer")

    @property
    def name(self) -> str:
        return f"ecp{self.ecp_n}" if self.kind == "ecp" else self.kind

    @property
    def config_space(self):
        """Encoding subspace searched by this scheme (None for non-encoding)."""
        if self.kind == "craft":
            return None  # full 64-config space
        if self.kind == "remap_invert":
            return REMAP_INVERT_CONFIGS
        return ()

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        text = text.strip().lower()
        if text in ("baseline", "remap_invert", "craft"):
            return cls(kind=text)
        if text == "ecp":
            return cls(kind="ecp", ecp_n=1)
        if text.startswith("ecp") and text[3:].isdigit():
            return cls(kind="ecp", ecp_n=int(text[3:]))
        raise ValueError(f"unknown scheme {text!r}")


@dataclass(frozen=True)
class TrialRecord:
    ber: float
    trial: int
    classification_error: float
    total_delta: float


@dataclass(frozen=True)
class BerPoint:
    ber: float
    mean_error: float
    std_error: float
    mean_delta: float


@dataclass(frozen=True)
class SweepResult:
    scheme: str
    ber_points: tuple[BerPoint, ...]
    trials: int
    seed: int
    fault_free_error: float
    records: tuple[TrialRecord, ...]


@dataclass(frozen=True)
class CriticalityPoint:
    position: int
    mean_error: float
    std_error: float
    mean_delta: float


@dataclass(frozen=True)
class CriticalityResult:
    points: tuple[CriticalityPoint, ...]
    ber: float
    trials: int
    seed: int
    fault_free_error: float


@dataclass(frozen=True)
class RobustnessRatio:
    """BER*_a / BER*_b, where BER* is where a curve leaves the error budget."""

    ratio: float
    ber_a: float
    ber_b: float
    censored_a: bool
    censored_b: bool

    @property
    def censored(self) -> bool:
        return self.censored_a or self.censored_b


def default_ber_grid(lo: float = 1e-5, hi: float = 1e-1, per_decade: int = 5) -> list[float]:
    """Logarithmic BER grid from lo to hi, per_decade points per decade."""
    if not 0 < lo <= hi or per_decade < 1:
        raise ValueError("invalid BER grid bounds")
    lo_exp, hi_exp = np.log10(lo), np.log10(hi)
    n = int(round((hi_exp - lo_exp) * per_decade)) + 1
    return [float(10.0 ** (lo_exp + i / per_decade)) for i in range(n)]


def _apply_scheme(blocks: np.ndarray, layout: BlockLayout, scheme: Scheme,
                  fault_map: FaultMap) -> tuple[np.ndarray, float]:
    """Readout blocks and total deviation after protecting each block."""
    read = blocks.copy()
    total = 0.0
    if len(fault_map) == 0:
        return read, total
    for b in np.unique(fault_map.bit_indices // PAYLOAD_BITS):
        offset = int(b) * PAYLOAD_BITS
        view = layout.view_for_block(int(b))
        block = blocks[b]
        if scheme.kind == "baseline":
            out = apply_faults(block, fault_map, offset)
            delta = deviation(block, out, view)
        elif scheme.kind == "ecp":
            out = ecp_correct(block, fault_map, offset, scheme.ecp_n)
            delta = deviation(block, out, view)
        else:
            stored, aux, delta = write_with_craft(block, fault_map, offset, view,
                                                  scheme.config_space)
            out = decode(stored, EncodingConfig.from_aux(aux), layout.precision)
        read[b] = out
        total += delta
    return read, total


def _test_error(blocks, layout, dataset) -> float:
    rebuilt = unflatten_model(blocks, layout)
    return 1.0 - accuracy(rebuilt, dataset.test_inputs, dataset.test_labels)


def run_trial(model: MlpModel | QuantizedModel, dataset, scheme: Scheme, ber: float,
              seed: int, sa1_fraction: float = DEFAULT_SA1_FRACTION) -> tuple[float, float]:
    """One fault-injection trial: (classification error, total deviation)."""
    blocks, layout = flatten_model(model)
    fmap = generate_fault_map(layout.n_blocks * PAYLOAD_BITS, ber, sa1_fraction, seed)
    read, total = _apply_scheme(blocks, layout, scheme, fmap)
    return _test_error(read, layout, dataset), total


def ber_sweep(model: MlpModel | QuantizedModel, dataset,
              schemes: Sequence[Scheme], ber_list: Sequence[float], trials: int,
              base_seed: int, threads: int = 1,
              sa1_fraction: float = DEFAULT_SA1_FRACTION) -> list[SweepResult]:
    """Run trials for every scheme x BER with paired fault maps.

    Results are reduced in (scheme, ber, trial) order regardless of how many
    worker threads execute them, so output is order-deterministic.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    blocks, layout = flatten_model(model)
    region = layout.n_blocks * PAYLOAD_BITS
    fault_free = _test_error(blocks, layout, dataset)

    def one_cell(task):
        ber, trial = task
        fmap = generate_fault_map(region, ber, sa1_fraction,
                                  trial_seed(base_seed, trial))
        out = []
        for scheme in schemes:
            read, total = _apply_scheme(blocks, layout, scheme, fmap)
            out.append((_test_error(read, layout, dataset), total))
        return out

    tasks = [(ber, t) for ber in ber_list for t in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(one_cell, tasks))
    else:
        cells = [one_cell(t) for t in tasks]

    results = []
    for si, scheme in enumerate(schemes):
        records = []
        points = []
        for bi, ber in enumerate(ber_list):
            errs = np.array([cells[bi * trials + t][si][0] for t in range(trials)])
            deltas = np.array([cells[bi * trials + t][si][1] for t in range(trials)])
            records.extend(
                TrialRecord(float(ber), t, float(errs[t]), float(deltas[t]))
                for t in range(trials)
            )
            points.append(BerPoint(float(ber), float(errs.mean()),
                                   float(errs.std(ddof=0)), float(deltas.mean())))
        results.append(SweepResult(
            scheme=scheme.name, ber_points=tuple(points), trials=trials,
            seed=base_seed, fault_free_error=fault_free, records=tuple(records),
        ))
    return results


def bit_criticality(model: MlpModel | QuantizedModel, dataset, ber: float = 1e-3,
                    trials: int = 100, base_seed: int = 0) -> CriticalityResult:
    """Inject faults at one bit position of every weight word at a time.

    For each position p, the candidate cells are bit p of every word in the
    flattened stream (no protection scheme is applied).  The same per-trial
    seed is reused across positions, so the stuck word pattern is paired.
    """
    blocks, layout = flatten_model(model)
    word_bits = layout.precision.word_bits
    region = layout.n_blocks * PAYLOAD_BITS
    n_words = region // word_bits
    fault_free = _test_error(blocks, layout, dataset)
    points = []
    for position in range(word_bits):
        errs = np.empty(trials)
        deltas = np.empty(trials)
        for t in range(trials):
            rng = make_rng(trial_seed(base_seed, t))
            stuck = rng.random(n_words) < ber
            values = (rng.random(int(stuck.sum())) < DEFAULT_SA1_FRACTION).astype(np.uint8)
            indices = np.flatnonzero(stuck).astype(np.int64) * word_bits + position
            fmap = FaultMap(region, indices, values, ber, DEFAULT_SA1_FRACTION,
                            trial_seed(base_seed, t))
            read, total = _apply_scheme(blocks, layout, Scheme("baseline"), fmap)
            errs[t] = _test_error(read, layout, dataset)
            deltas[t] = total
        points.append(CriticalityPoint(position, float(errs.mean()),
                                       float(errs.std(ddof=0)), float(deltas.mean())))
    return CriticalityResult(points=tuple(points), ber=ber, trials=trials,
                             seed=base_seed, fault_free_error=fault_free)


def second_zero_exponent_bit(model: MlpModel) -> int:
    """The exponent bit below 30 that is most often zero across the weights.

    Bit 30 is the first almost-always-zero position for trained weights
    (|w| < 2); this returns the next such position, the one whose stuck-at-1
    faults blow weights up by the largest factor.  Ties break toward the
    higher bit.
    """
    raw = np.concatenate([np.ascontiguousarray(w, dtype="<f4").reshape(-1).view("<u4")
                          for w in model.weights])
    positions = np.arange(23, 30)
    zero_frac = [float(((raw >> int(p)) & 1 == 0).mean()) for p in positions]
    best = max(range(len(positions)), key=lambda i: (zero_frac[i], positions[i]))
    return int(positions[best])


def _threshold_crossing(sweep: SweepResult, threshold_points: float) -> tuple[float, bool]:
    """Largest BER at which the curve stays within fault-free + threshold.

    Interpolates linearly in log10(BER) between the last within-budget grid
    point and the first exceeding one.  Returns (ber, censored): censored
    means the curve never exceeds the budget on the grid, so the value is a
    lower bound.
    """
    limit = sweep.fault_free_error + threshold_points
    bers = [p.ber for p in sweep.ber_points]
    errors = [p.mean_error for p in sweep.ber_points]
    within = [i for i, e in enumerate(errors) if e <= limit]
    if not within:
        return bers[0], False
    i = max(within)
    if i == len(bers) - 1:
        return bers[-1], True
    lo, hi = np.log10(bers[i]), np.log10(bers[i + 1])
    t = (limit - errors[i]) / (errors[i + 1] - errors[i])
    return float(10.0 ** (lo + t * (hi - lo))), False


def robustness_improvement(sweep_a: SweepResult, sweep_b: SweepResult,
                           threshold_points: float = 0.05) -> RobustnessRatio:
    """How much later (in BER) sweep_a's error collapses compared to sweep_b.

    The collapse point is where mean error first exceeds the scheme's
    fault-free error by threshold_points.
    """
    if [p.ber for p in sweep_a.ber_points] != [p.ber for p in sweep_b.ber_points]:
        raise ValueError("sweeps must share the same BER grid")
    ber_a, cens_a = _threshold_crossing(sweep_a, threshold_points)
    ber_b, cens_b = _threshold_crossing(sweep_b, threshold_points)
    return RobustnessRatio(ratio=ber_a / ber_b, ber_a=ber_a, ber_b=ber_b,
                           censored_a=cens_a, censored_b=cens_b)


def write_raw_csv(results: Sequence[SweepResult], path) -> None:
    with open(path, "w") as fh:
        fh.write("scheme,ber,trial,classification_error,total_delta\n")
        for res in results:
            for r in res.records:
                fh.write(f"{res.scheme},{r.ber!r},{r.trial},"
                         f"{r.classification_error!r},{r.total_delta!r}\n")


def write_summary_csv(results: Sequence[SweepResult], path) -> None:
    with open(path, "w") as fh:
        fh.write("scheme,ber,mean_error,std_error,mean_delta\n")
        for res in results:
            for p in res.ber_points:
                fh.write(f"{res.scheme},{p.ber!r},{p.mean_error!r},"
                         f"{p.std_error!r},{p.mean_delta!r}\n")


def write_criticality_csv(result: CriticalityResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("position,mean_error,std_error,mean_delta\n")
        for p in result.points:
            fh.write(f"{p.position},{p.mean_error!r},{p.std_error!r},{p.mean_delta!r}\n")
