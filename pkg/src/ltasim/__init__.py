"""Long-term autonomy kernel for an indoor service robot.

The package combines a topological map, spectral models of periodic binary
processes, a risk-aware navigation MDP, monitored edge traversal with ordered
recovery behaviours, a greedy deadline scheduler with battery and watchdog
management, trajectory-based activity learning, and an append-only event log
with replayable learned state. A deterministic simulated world drives
multi-week deployments for experiments and regression tests.
"""

__version__ = "0.1.0"
