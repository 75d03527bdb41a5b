"""Delay, throughput capacity and relay-buffer overflow of two-hop relay MANETs.

Closed-form models live in :mod:`bufmanet.mac`, :mod:`bufmanet.relay` and
:mod:`bufmanet.delay`; :mod:`bufmanet.sim` simulates the same network slot by
slot and :mod:`bufmanet.harness` sweeps both side by side.
"""

from .delay import DelayReport, delivery_delay, e2e_delay, e2e_delay_infinite
from .errors import BufManetError, InvalidParameter, ModelInvalid, NoConvergence, UnstableLoad
from .mac import (MacScenario, MacVariant, TransmissionProbabilities,
                  ec_mac_epsilon, ec_mac_probabilities, ls_mac_probabilities)
from .relay import (BufferDistribution, BufferModelInput, saturation_rop, solve_rop,
                    throughput_capacity)
from .sim import Mobility, SimConfig, SimMetrics, run_simulation

__version__ = "0.1.0"

__all__ = [
    "BufManetError", "BufferDistribution", "BufferModelInput", "DelayReport",
    "InvalidParameter", "MacScenario", "MacVariant", "Mobility", "ModelInvalid",
    "NoConvergence", "SimConfig", "SimMetrics", "TransmissionProbabilities",
    "UnstableLoad", "delivery_delay", "e2e_delay", "e2e_delay_infinite",
    "ec_mac_epsilon", "ec_mac_probabilities", "ls_mac_probabilities",
    "run_simulation", "saturation_rop", "solve_rop", "throughput_capacity",
]
