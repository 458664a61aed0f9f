"""Mixed displacement-stress neural solvers for 2D linear elasticity with
energy-based a posteriori error bounds.

Subpackages:

  autodiff    scalar tape with recorded spatial tangents and reverse sweeps
  network     per-field MLPs, the five-network mixed solution, checkpoints
  elasticity  material law, energy densities, the manufactured benchmark
  engine      vectorized forward/tangent/backward core used for training
  pinn        six-term collocation loss and full-batch Adam training
  cre         constitutive-relation error and energy error functionals
  bench       scenario/sweep harness, CSV reports, command line
"""

from .autodiff import AutodiffError, NodeRef, ScalarGraph
from .elasticity import (
    ManufacturedProblem,
    Material,
    QuadraticEnergy,
    energy_W,
    energy_Wstar,
    hooke_apply,
    hooke_inverse,
)
from .network import FieldNetwork, MixedSolution, NetworkShape, evaluate_fields, initialize
from .pinn import (
    CollocationSet,
    LossBreakdown,
    LossConfig,
    TrainConfig,
    assemble_loss,
    make_collocation,
    train,
)
from .cre import (
    AdmissiblePair,
    ErrorReport,
    QuadratureGrid,
    bound_report,
    cre_psi,
    orthogonality_check,
    phi_error,
    varphi_error,
)

__version__ = "0.1.0"
