"""Path-integral Monte Carlo estimates for trapped fermions.

The partition function and mean-field energy are estimated from Brownian
bridge samples. Each sample yields an ``n x n`` matrix of path weights
whose determinant carries the antisymmetry.
"""

from .accumulate import EstimateReport, PairAccumulator
from .config import RunConfig
from .determinant import build_w, det_and_adjugate, sample_pair, spin_split_pair
from .estimators import convergence_sweep, estimate_meanfield, estimate_partition
from .exceptions import (
    ConfigurationError, DomainError, EstimationError, FermionPIMCError, NumericError,
    PrecisionError, SignProblemError, SingularityError, UnsupportedConfigurationError,
)
from .oracles import Statistics, exact_ho_meanfield, exact_ho_partition, tensor_estimate
from .paths import ImportanceDensity, TimeGrid, draw_block, sample_bridge
from .perturbation import PerturbationConfig, perturbed_meanfield, perturbed_w
from .potentials import PotentialKind, PotentialSpec, harmonic, harmonic_coulomb
from .statistics import ReplicaPlan, g_epsilon, ratio_with_ci, replica_diagnostics
from .system import SystemSpec

__version__ = "0.1.0"
