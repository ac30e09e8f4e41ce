"""Low-rank + cluster-sparse decomposition for hyperspectral anomaly detection."""
from .csp_bp import BACKENDS, DEFAULT_BACKEND, CspParams, infer
from .godec import DecompositionResult, GodecParams, godec, turbo_godec
from .hsi_data import HsiCube, PixelMatrix, flatten, load_cube, normalize, save_cube, unflatten
from .metrics import AucReport, auc_report, evaluate, roc_3d

__version__ = "0.1.0"

__all__ = [
    "BACKENDS", "DEFAULT_BACKEND", "CspParams", "infer",
    "DecompositionResult", "GodecParams", "godec", "turbo_godec",
    "HsiCube", "PixelMatrix", "flatten", "unflatten", "load_cube", "save_cube", "normalize",
    "AucReport", "auc_report", "evaluate", "roc_3d",
]
