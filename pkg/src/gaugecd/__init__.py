"""Gauge-based curvature-dimension numerics: LQ model functions, distortion
coefficients, Heisenberg geometry and verification checks."""

__version__ = "0.1.0"
