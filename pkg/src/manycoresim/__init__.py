"""Tick-level simulator of a clustered many-core management fabric.

Dedicated management nodes map recursively forking task trees onto
processing elements, coordinate through typed bus messages, and keep
each other's load summaries fresh with threshold-triggered beacons.
The `analytic` module carries the matching closed-form overhead model;
`experiments` and the `manycoresim` CLI reproduce the measurement
sweeps the design is judged by.
"""

from .analytic import (best_cluster_count, mapping_overhead,
                       messaging_overhead, model_curve, selection_delay,
                       speedup)
from .experiments import (ConfigError, SimConfig, load_config,
                          run_experiment, sweep)
from .kernel import Kernel, SimulationError
from .machine import Chip
from .protocol import (Address, Message, MessageType, NodeKind,
                       decode_message, encode_message, make_message)
from .traces import (AppBundle, gen_independent,
                     gen_interference_schedule, parse_traces)

__version__ = "0.1.0"

__all__ = [
    "Address", "AppBundle", "Chip", "ConfigError", "Kernel", "Message",
    "MessageType", "NodeKind", "SimConfig", "SimulationError",
    "best_cluster_count", "decode_message", "encode_message",
    "gen_independent", "gen_interference_schedule", "load_config",
    "make_message", "mapping_overhead", "messaging_overhead",
    "model_curve", "parse_traces", "run_experiment", "selection_delay",
    "speedup", "sweep",
]
