"""Feature selection by minimum-norm least squares and matrix perturbation."""

from .data import Dataset, load_csv, knn_impute, normalize, stratified_split
from .selector import DrptConfig, SelectionReport, run_pipeline
from .synth import paper_synthetic, planted, PlantedSpec

__all__ = [
    "Dataset",
    "DrptConfig",
    "PlantedSpec",
    "SelectionReport",
    "knn_impute",
    "load_csv",
    "normalize",
    "paper_synthetic",
    "planted",
    "run_pipeline",
    "stratified_split",
]

__version__ = "0.1.0"
