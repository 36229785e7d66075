"""Fractal video datasets from 3D iterated function systems.

Sampling (naive or SVD-constructed), parameter and cloud filters, Chaos Game
point clouds, motion profiles, a depth-coloured software rasteriser, a
random-forest quality filter and a generation benchmark.
"""

from .chaos import DivergenceError, axis_variances, chaos_game, covariance_eigenvalues
from .filters import (AttemptsExhausted, FilterConfig, FilterVerdict, Reason, Strategy,
                      generate_valid, tsf_filter, variance_filter)
from .ifs import (AffineMap3, IfsSystem, Provenance, RotationMode, sample_naive,
                  sample_svd_controlled, sample_system_size, selection_probabilities)
from .linalg import (SvdResult, determinant, rotation_from_euler, rotation_from_quaternion,
                     spectral_norm, svd3)
from .video import Easing, MotionProfile, ease, render_sequence_clouds, transform_at

__version__ = "0.1.0"
