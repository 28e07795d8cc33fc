"""Noisy quantum circuit sampling that simulates each distinct error pattern once.

Sampled error realizations are tallied, reduced to canonical forms by pushing
Paulis through the circuit, optionally pruned, and executed as a shared-prefix
tree so common gate prefixes run once.
"""

from .bench import BenchmarkSpec, RunReport, classical_fidelity, rel_fidelity_diff, speedup, tvd
from .circuit import Circuit, CircuitError, GateKind, Operation, StateVector, op, parse_circuit, run_noiseless
from .ecm import ERTally, canonical_layout, commute_er, reduce_tally, tally_ers
from .noise import NoiseSpec, PauliChannel, attach_noise
from .oracle import OracleCapacityError, dms_run, naive_svs, pruning_bound
from .pipeline import ConfigError, RunConfig, emit_report, run_pipeline
from .tem import ExecutionTree, PruningConfig, dftt_execute, parallel_subtrees, partition_significant

__version__ = "0.1.0"
