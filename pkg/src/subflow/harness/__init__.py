"""Data generators, file I/O, baselines and experiment runners."""

from .baselines import GeodesicCurve, resample_polyline, sse_to_curve, tangent_pca_geodesic
from .datasets import (PointCloud, QuarticCurve, gen_bumpy_sphere, gen_s_surface, gen_sphere_cloud,
                       gen_sphere_curve_dataset)
from .experiments import (EXPERIMENTS, ExperimentConfig, RunReport, default_config, eigen_gap_report,
                          run_experiment)
from .io import load_cloud, save_cloud

__all__ = [
    "EXPERIMENTS", "ExperimentConfig", "GeodesicCurve", "PointCloud", "QuarticCurve", "RunReport",
    "default_config", "eigen_gap_report", "gen_bumpy_sphere", "gen_s_surface", "gen_sphere_cloud",
    "gen_sphere_curve_dataset", "load_cloud", "resample_polyline", "run_experiment", "save_cloud",
    "sse_to_curve", "tangent_pca_geodesic",
]
