"""Linear-quadratic stochastic control with a deterministic switch time."""
from .closed_form import (Certificate, Example43Params, Scalar1DParams, ex43_p1, ex43_spec,
                          ex43_value, nontrivial_certificate, p2_closed_ex43,
                          p2_closed_general, scalar_spec, theta_and_pplus)
from .dot import (Classification, OptimalTimeResult, ValueCurve, find_optimal_time,
                  sensitivity_fd, sensitivity_scalar, value_curve)
from .exceptions import (ConfigError, DegenerateTerminal, DomainError, RiccatiBlowUp,
                         SimulationError)
from .model import (CoeffTable, ProblemSpec, TimeGrid, ValidationReport, build_stopped_system,
                    validate_spec)
from .riccati import (RiccatiSolution, Stage1Solution, feedback_gain, solve_stage1,
                      solve_stage2, value_at_zero)
from .simulate import (OptimalFeedback, SimConfig, SimReport, compare_controls,
                       simulate_closed_loop, simulate_with_control, stationarity_check)

__version__ = "0.1.0"
