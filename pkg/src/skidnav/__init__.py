"""Skid-steer robot navigation and control stack, fully simulated.

Layers: a synthetic actuation/terrain plant, a learned per-side actuation
surrogate trained with Levenberg-Marquardt, a barrier-scaled adaptive
low-level controller, a multiple-shooting NMPC tracker, and a safety
supervisor, all driven by a deterministic multi-rate runtime.
"""

__version__ = "0.1.0"
