"""conewatch: numerical experiments for flows monotone with respect to rank-k quadratic cones."""

from conewatch._backend import BACKEND, get_kernels
from conewatch.classifier import (ClassifierParams, OmegaClass, OmegaKind, OrbitRecord,
                                  PseudoOrderWitness, classify_omega, classify_orbit,
                                  detect_pseudo_ordered, estimate_period)
from conewatch.cone import (Membership, MembershipClass, Order, QuadraticCone, build_cone,
                            classify_point, cone_from_json, cone_to_json, order_relation,
                            probe_neighborhood, probe_subspace, sample_boundary, sets_ordered)
from conewatch.cooperativity import (empirical_monotonicity, fundamental_cone_invariance,
                                     minimal_constant_lambda, smith_lmi_check)
from conewatch.dynamics import (Box, IntegratorConfig, Trajectory, dissipativity_probe,
                                find_equilibria, integrate, integrate_variational)
from conewatch.errors import (BlowUp, ConewatchError, DegenerateFrame, DimensionMismatch,
                              EmptySweep, GapTooSmall, HorizonTooShort, JacobianUnavailable,
                              NumericalFailure, SignatureError, StepFailure, UnknownModel,
                              ValidationError)
from conewatch.models import VectorFieldModel, callable_model, polynomial_model
from conewatch.prevalence import SweepConfig, SweepReport, pb_check, probe_scan, sweep
from conewatch.spectral import (SeparationEstimate, estimate_bundles, k_lyapunov_exponent,
                                lyapunov_spectrum, separation_estimate, verify_separation)
from conewatch.zoo import MODEL_NAMES, get_model

__version__ = "0.1.0"
