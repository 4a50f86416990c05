"""Gaussian mixture parameter recovery from moments.

The moment equations of a univariate Gaussian mixture form a sparse
polynomial system whose generic solution count is known in closed form for
the standard model classes; binomial start systems with exactly that many
roots make homotopy continuation track no wasted paths.  The multivariate
pipelines reduce an n-dimensional mixture to one hard univariate solve, n-1
easy ones and some linear algebra, so recovery scales linearly in n.
"""

__version__ = "0.1.0"

from momentmix.backend import HAVE_COMPILED, backend_name
from momentmix.homotopy import PathResult, StartSystem, TrackerSettings
from momentmix.modelsolve import ModelClass, Tolerances, UnivariateSolution
from momentmix.moments import Knowns, MixtureParams, MomentTable
from momentmix.polysys import PolySystem, SparsePoly
from momentmix.recover import RecoveryReport, algorithm1, algorithm2

__all__ = [
    "HAVE_COMPILED",
    "Knowns",
    "MixtureParams",
    "ModelClass",
    "MomentTable",
    "PathResult",
    "PolySystem",
    "RecoveryReport",
    "SparsePoly",
    "StartSystem",
    "Tolerances",
    "TrackerSettings",
    "UnivariateSolution",
    "algorithm1",
    "algorithm2",
    "backend_name",
]
