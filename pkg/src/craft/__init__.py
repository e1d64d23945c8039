"""Stuck-at-fault tolerant storage encodings for neural-network weights.

The package models non-volatile memory with stuck-at cells, implements
reversible block encodings (slot remapping, inversion, bit switching) that
minimize net weight deviation under a given fault map, an
error-correcting-pointers baseline, and a Monte Carlo harness that sweeps
bit error rates against a small quantized MLP.
"""

from .codecs import (ALL_CONFIGS, IDENTITY_CONFIG, REMAP_CONFIGS,
                     REMAP_INVERT_CONFIGS, EncodingConfig, Precision,
                     craft_overhead, decode, ecp_correct, ecp_overhead, encode,
                     invert, remap, switch_bits)
from .memory import (AUX_BITS, PAYLOAD_BITS, DataBlock, FaultMap, apply_faults,
                     count_mismatches, generate_fault_map, load_fault_map,
                     save_fault_map)
from .nn import (MlpModel, QuantizedLayer, QuantizedModel, SyntheticDataset,
                 TrainingDivergedError, TrainResult, accuracy, dequantize,
                 infer, make_dataset, quantize, train)
from .objective import (DeviationReport, WeightView, deviation,
                        search_best_encoding, write_with_craft)
from .harness import (CriticalityResult, RobustnessRatio, Scheme, SweepResult,
                      ber_sweep, bit_criticality, default_ber_grid,
                      robustness_improvement, run_trial,
                      second_zero_exponent_bit)
from .weightfile import (BlockLayout, flatten_model, load_blocks, load_model,
                         load_sidecar, save_blocks, save_model, save_sidecar,
                         unflatten_model)

__version__ = "0.1.0"
