"""De Rham and Wu decompositions of metrics given in coordinates.

The pipeline finds holonomy-invariant symmetric forms at a base point, then
splits the tangent space into factor blocks, either orthogonally (Riemannian,
or Lorentzian with a non-degenerate space of parallel vectors) or around a
parallel null vector (Lorentzian Wu case).
"""

from .errors import DegeneratePointError, HolosplitError, InputError, ToleranceError
from .geometry import FormField, MetricSpec, metric_at
from .holonomy import generate_holonomy, invariant_sym_forms, invariant_vectors
from .pipeline import Decomposition, JobSpec, report, run, verify_supplied_forms
from .split_derham import DeRhamSplit, derham_split
from .split_wu import WuSplit, wu_split

__all__ = [
    "DeRhamSplit", "Decomposition", "DegeneratePointError", "FormField", "HolosplitError",
    "InputError", "JobSpec", "MetricSpec", "ToleranceError", "WuSplit", "derham_split",
    "generate_holonomy", "invariant_sym_forms", "invariant_vectors", "metric_at", "report",
    "run", "verify_supplied_forms", "wu_split",
]
__version__ = "0.1.0"
