"""Quantum dynamical maps as jump series, memory kernels and time-local generators."""
from .errors import *  # noqa: F401,F403
from .superop import (apply, choi, kraus_to_superop, verdict_cp, verdict_trace, depolarizing_channel,
                      identity_superop, unitary_superop, transpose_superop, left_right, vec, unvec)
from .grid import (TimeGrid, OneParamFamily, TwoParamFamily, OneParamKernel, KernelFamily, lift,
                   convolve_hom, convolve_inhom, convolve_kernel, convolve_right_kernel, associativity_defect,
                   homogeneity_defect)
from .gkls import GKLSSpec, build_generator, split_generator, sample_family
from .series import (JumpModel, SeriesResult, series, series_semigroup, series_homogeneous,
                     series_inhom_semigroup, series_inhomogeneous, resum_qp, hierarchy_residual,
                     time_ordered_rk4)
from .kernel_solver import (VolterraScheme, kernel_from_pair, solve_volterra, z_from_free, new_me_residual,
                            laplace_check, reconvolution_residual)
from .tcl import (TCLFamily, extract_tcl, integrate_tcl, propagator, composition_defect, propagator_t0_defect,
                  tcl_t0_defect, roundtrip_defect)
from .models import (ModelDescriptor, model_amplitude_damping, model_semi_markov, model_dephasing_inhom,
                     get_model, list_models)

__version__ = "0.1.0"
