"""Reduction of linear reaction networks to renewal equations.

A linear network ``dn/dt = A n`` split into compartments is rewritten as a
system of convolution (renewal) equations for the fluxes between
compartments.  The package computes the response kernels, solves the
renewal system and its age-structured counterpart, analyses kernels
(Markovianity, detailed balance, long-time limits), approximates kernels by
Erlang mixtures realized as networks, and ships a small model collection.

Inner loops run in the compiled extension ``renewalkit._core`` when it is
available and fall back to numpy otherwise (see :mod:`renewalkit.backend`).
"""
from .backend import BACKEND
from .errors import (ConvergenceError, EntranceError, GridError, InputError,
                     NegativeSolutionError, NetworkError, NumericalError,
                     PartitionError, RenewalKitError)
from .kernels import (KernelSet, MassEntry, ScalarKernelSet, TimeGrid,
                      compute_forcing, compute_kernels, compute_scalar_kernels,
                      kernel_mass_report, reduce_one_entrance, suggest_t_max)
from .matfun import expm
from .network import (CompartmentSystem, DetailedBalanceCertificate,
                      ReactionNetwork, check_one_entrance, decompose,
                      detect_detailed_balance, network_from_matrix,
                      validate_network)
from .renewal import (RenewalSolution, equivalence_check, ode_reference,
                      solve_renewal, solve_renewal_scalar)
from .spe import (AgeDensity, AgeRates, HistoryMeasure, forward_history_check,
                  kernels_from_rates, rates_from_kernels, solve_spe,
                  spe_rfe_equivalence)
from .analysis import (build_M, complete_monotonicity_check,
                       detailed_balance_kernel, first_moments, laplace_kernel,
                       long_time_limits, markovianity_test, perron,
                       perron_details)
from .phasetype import (PhaseTypeModel, TargetMeasure, bounded_lipschitz,
                        build_network, fit_compartment, fit_erlang_mixture,
                        verify_approximation)
from .volterra import solve_volterra, trapezoid_convolution
from . import io, zoo

__version__ = "0.1.0"
