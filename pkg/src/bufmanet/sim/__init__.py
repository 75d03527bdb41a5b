from .simulator import (Estimate, Mobility, NetworkState, SimConfig, SimMetrics,
                        h2hr_step, init_topology, mobility_step, run_replication,
                        run_simulation, schedule_transmitters, traffic_permutation,
                        write_trace)

__all__ = [
    "Estimate", "Mobility", "NetworkState", "SimConfig", "SimMetrics", "h2hr_step",
    "init_topology", "mobility_step", "run_replication", "run_simulation",
    "schedule_transmitters", "traffic_permutation", "write_trace",
]
