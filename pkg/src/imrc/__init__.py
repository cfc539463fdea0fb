"""Ground-truth-free geometry evaluation of density volumes.

Fits low-degree spherical harmonics to the colors each calibrated camera
sees at every grid vertex and reports the transmittance-weighted mean
residual color (MRC) and its decibel form (IMRC). A Chamfer-distance
baseline and analytic synthetic scenes are included.
"""
from .core import (DegenerateDirectionError, DegenerateFieldError, DegenerateResultError, EvalConfig,
                   GridBoundsError, ImrcError, LoadError, NoObservationError, NoSurfaceError, SearchError,
                   linear_index, normalize)
from .fields import DensityVolume, Ray, RaySample, march_ray, sample_density, transmittance_to_camera
from .observation import (CameraModel, ImageBuffer, Observation, ObservationSet, gather_observations,
                          project, sample_bilinear, view_direction)
from .sh import FitResult, SHExpansion, evaluate, fit_unweighted, fit_weighted_sequential, sh_basis
from .metric import (MetricReport, ResidualGrid, compute_mrc, compute_mrc_degrees, imrc, render_depth,
                     render_residual, voxel_residual_terms)
from .chamfer import (CDSearchResult, PointCloud, TriangleMesh, best_cd, chamfer_distance,
                      golden_section_search, marching_cubes, sample_mesh_surface)
from ._threads import get_threads, set_threads

__version__ = "0.1.0"
