"""Classical simulator and verification bench for recurrent quantum neural networks."""

from ._kernels import BACKEND
from .circuit import CircuitParams, build_U, build_V, dense_probs, fast_probs, measure_probs
from .errors import (AmplitudeOutOfRange, InvalidArgument, InvalidState, NumericWarning, RQNNError,
                     SamplingFailure, UnsupportedMethod, UnsupportedTarget)
from .fourier import (RateReport, approximation_constants, error_joint, error_l2, error_sup,
                      fit_amplitudes, rate_sweep, sample_theta, sample_theta_bounded)
from .qnn import ThetaBundle, eval_component, eval_state_map, gradient, jacobian_x
from .reservoir import (FilterTask, ReservoirSystem, build_shift_preprocessors, check_esp,
                        filter_error, n0, run, theoretical_bound, train_readout)
from .shots import ShotConfig, eval_qnn_shots, run_shots, sample_counts
from .targets import Gaussian, GaussianCosine, ShiftedGaussian, make_target

__version__ = "0.1.0"
