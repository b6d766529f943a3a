"""Registration-based model order reduction for parametric fields."""
from .geometry import Partition, PolarChart, PolarGeometry, GordonHallElement
from .femesh import FEMesh, discrete_bijectivity_check, map_mesh
from .spaces import build_dd_space, build_polar_space, build_rect_space
from .sensor import SensorGrid, build_sensor
from .registration import RegistrationConfig, RegistrationProblem, greedy_registration, \
    register_one
from .reduction import CoefficientRegressor, ReducedModel, pod, pod_cardinality
from .synthetic import ManifoldSpec, SyntheticProblem, generate
from .pipeline import OfflineSettings, evaluate, offline

__version__ = "0.1.0"
