"""End-to-end orchestration: configuration, the staged pipeline and report output."""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .bench import BenchmarkSpec, RunReport, classical_fidelity, ideal_distribution
from .circuit import Circuit, counts_to_dict, load_circuit, sample_counts
from .ecm import reduce_tally, tally_ers
from .noise import NoiseSpec, attach_noise, site_channels
from .oracle import MAX_DMS_QUBITS, OracleCapacityError, dms_probabilities, naive_svs, pruning_bound
from .rng import stream
from .tem import PruningConfig, keep_all, parallel_subtrees, partition_significant, tree_from_partition

log = logging.getLogger(__name__)

MODES = ("tusq", "naive", "dms")

# report fields that depend on wall clock or on how the tree was split across workers
_VOLATILE_STATS = (
    "forward_gate_applications",
    "inverse_gate_applications",
    "forward_edge_traversals",
    "inverse_edge_traversals",
    "restarts",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    benchmark: Optional[BenchmarkSpec] = None
    circuit_path: Optional[str] = None
    shots: int = 10_000
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    pruning: PruningConfig = field(default_factory=PruningConfig)
    mode: str = "tusq"
    workers: int = 1
    out: Optional[str] = None
    commute: bool = True
    prune: bool = True
    policy: str = "cheapest"
    dump_tally: Optional[str] = None

    def __post_init__(self):
        if (self.benchmark is None) == (self.circuit_path is None):
            raise ConfigError("give exactly one of a benchmark or a circuit file")
        if int(self.shots) < 1:
            raise ConfigError(f"shots must be at least 1, got {self.shots}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if int(self.workers) < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.policy not in ("cheapest", "rollback"):
            raise ConfigError(f"unknown traversal policy {self.policy!r}")
        self.shots = int(self.shots)
        self.workers = int(self.workers)

    def load(self) -> Circuit:
        """The noiseless circuit this configuration describes."""
        if self.benchmark is not None:
            return self.benchmark.build()
        return load_circuit(self.circuit_path)

    def to_dict(self, reproducible: bool = False) -> dict:
        d = {
            "benchmark": None if self.benchmark is None else self.benchmark.to_dict(),
            "circuit_path": self.circuit_path,
            "shots": self.shots,
            "seed": self.seed,
            "noise": self.noise.to_dict(),
            "alpha": self.pruning.alpha,
            "beta": self.pruning.beta,
            "selection": self.pruning.selection,
            "mode": self.mode,
            "workers": self.workers,
            "commute": self.commute,
            "prune": self.prune,
            "policy": self.policy,
        }
        if reproducible:
            del d["workers"]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Build from a JSON-style mapping using the same keys as :meth:`to_dict`."""
        data = dict(data)
        unknown = set(data) - {
            "benchmark", "circuit_path", "shots", "seed", "noise", "alpha", "beta", "selection",
            "mode", "workers", "out", "commute", "prune", "policy", "dump_tally",
        }
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            bench = data.pop("benchmark", None)
            noise = data.pop("noise", None)
            pruning = PruningConfig(
                alpha=float(data.pop("alpha", 0.01)),
                beta=int(data.pop("beta", 100)),
                selection=data.pop("selection", "weighted"),
            )
            return cls(
                benchmark=None if bench is None else BenchmarkSpec(**bench),
                noise=NoiseSpec() if noise is None else NoiseSpec.from_dict(noise),
                pruning=pruning,
                **data,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


class _Clock:
    def __init__(self):
        self.times = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0


def run_pipeline(cfg: RunConfig, circuit: Optional[Circuit] = None) -> RunReport:
    """Execute ``cfg.mode`` end to end; deterministic given the config and seed.

    ``circuit`` overrides the circuit named in ``cfg`` (useful for callers that
    already hold one).
    """
    start = time.perf_counter()
    circuit = cfg.load() if circuit is None else circuit
    if circuit.noise_sites:
        circuit = circuit.without_noise()
    if cfg.mode == "dms" and circuit.n_qubits > MAX_DMS_QUBITS:
        raise OracleCapacityError(f"dms mode supports at most {MAX_DMS_QUBITS} qubits, circuit has {circuit.n_qubits}")
    noisy = attach_noise(circuit, cfg.noise)
    width = len(circuit.measured_qubits)
    S = cfg.shots
    clock = _Clock()
    stats: dict = {}
    bound = None
    key_counts = dict(sampled=S, tallied=S, commuted=S, significant=S, selected_insignificant=0)

    if cfg.mode == "dms":
        with clock.stage("simulate"):
            probs = dms_probabilities(noisy, cfg.noise)
        with clock.stage("sample"):
            dist = counts_to_dict(sample_counts(probs, S, stream(cfg.seed, "dms-sample")), width)
    elif cfg.mode == "naive":
        with clock.stage("simulate"):
            dist = naive_svs(noisy, cfg.noise, S, stream(cfg.seed, "naive"))
    else:
        channels = site_channels(noisy, cfg.noise)
        with clock.stage("tally"):
            tally = tally_ers(noisy, channels, S, stream(cfg.seed, "tally"))
        key_counts["tallied"] = len(tally)
        if cfg.commute:
            with clock.stage("commute"):
                tally = reduce_tally(noisy, tally)
        key_counts["commuted"] = len(tally)
        if cfg.dump_tally:
            tally.write_csv(cfg.dump_tally)
        with clock.stage("partition"):
            if cfg.prune:
                part = partition_significant(tally, cfg.pruning, stream(cfg.seed, "prune"))
                bound = pruning_bound(part)
            else:
                part = keep_all(tally)
        key_counts["significant"] = len(part.significant_counts)
        key_counts["selected_insignificant"] = part.n_selected
        with clock.stage("tree"):
            tree = tree_from_partition(part)
        with clock.stage("traverse"):
            dist, st = parallel_subtrees(tree, None, cfg.workers, cfg.seed, cfg.policy)
        stats = st.to_dict()
        log.info("tree: %d leaves, %d edges, height %d", tree.n_leaves, tree.n_edges, tree.height)

    wall = time.perf_counter() - start
    total = sum(dist.values())
    if total != S:
        raise RuntimeError(f"shot total {total} does not match the configured {S}")
    fidelity = classical_fidelity(dist, ideal_distribution(circuit))
    log.info("mode=%s shots=%d wall=%.3fs fidelity=%.6f", cfg.mode, S, wall, fidelity)
    return RunReport(
        distribution=dist,
        wall_time=wall,
        traversal_stats=stats,
        config=cfg.to_dict(),
        fidelity=fidelity,
        stage_times_s=dict(clock.times),
        key_counts=key_counts,
        pruning_bound=bound,
    )


def report_document(report: RunReport, reproducible: bool = False) -> dict:
    """JSON-ready mapping. ``reproducible`` drops timing and worker-dependent fields."""
    config = dict(report.config)
    stats = dict(report.traversal_stats)
    doc = {
        "config": config,
        "distribution": report.distribution,
        "key_counts": report.key_counts,
        "traversal_stats": stats,
        "pruning_bound": report.pruning_bound,
        "fidelity": report.fidelity,
    }
    if reproducible:
        config.pop("workers", None)
        for k in _VOLATILE_STATS:
            stats.pop(k, None)
    else:
        doc["stage_times_s"] = report.stage_times_s
        doc["wall_time_s"] = report.wall_time
    return doc


def dumps_report(report: RunReport, reproducible: bool = False) -> str:
    return json.dumps(report_document(report, reproducible), sort_keys=True, indent=2) + "\n"


def emit_report(report: RunReport, path, reproducible: bool = False) -> Path:
    """Write the JSON report to ``path`` and the distribution to a ``.csv`` sidecar."""
    path = Path(path)
    path.write_text(dumps_report(report, reproducible))
    sidecar = path.with_suffix(".csv")
    with open(sidecar, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bitstring", "count"])
        for k in sorted(report.distribution):
            w.writerow([k, report.distribution[k]])
    return sidecar
