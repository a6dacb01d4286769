"""Quadrotor wind-disturbance workbench: residual-force SINDy identification
and leaky-RLS adaptive control, benchmarked against a PID baseline."""

__version__ = "0.1.0"
