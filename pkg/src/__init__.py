"""
Invariant Gaussian Random Field Laboratory

Samples invariant Gaussian fields on the line, plane, space, sphere and
hyperbolic disk, measures their zero sets and compares the measurements
with Kac-Rice predictions.

Key Features:
- Exact spherical-function covariances for every geometry
- Seed-stream samplers with closed-form gradients
- Level crossings, point zeros and nodal lengths on intrinsic grids
- LangGraph experiment pipelines with deterministic parallel replications
"""

__version__ = "0.1.0"
