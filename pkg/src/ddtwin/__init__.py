"""Declarative digital twin toolchain for periodic real-time pipelines.

The package compiles a flow DSL plus YAML constraint manifests and an XML
hardware pattern catalog into a task graph, computes best-case latency
schedules under the declared constraints, and derives directed test
scenarios by injecting failure-inducing constraints.
"""

__version__ = "0.1.0"
