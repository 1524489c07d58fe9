"""Worked biochemical examples: proofreading, polymer growth, adaptation, feed-forward loop."""
from .adaptation import (AdaptationParams, adaptation_kernel, adaptation_kernel_integral,
                         adaptation_ode, adaptation_response)
from .ffl import (FFLParams, ffl_kernel, ffl_limit_response, ffl_ode, ffl_response,
                  ffl_step_off)
from .hopfield import (HopfieldParams, reference_params, hopfield_discrimination,
                       hopfield_mean_time, hopfield_network, hopfield_response,
                       hopfield_yield)
from .polymer import (becker_doring_reference, erlang_kernel, nonlinear_polymer,
                      polymer_front)
from .presets import PRESETS, DemoResult, mean_time_regime_params, run_preset
