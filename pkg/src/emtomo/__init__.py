"""emtomo: tomographic phase-space representations of charged-particle
quantum states in electromagnetic fields.

The package builds gauge-covariant Wigner functions, symplectic/optical and
scalar-observable tomograms with their quantizer/dequantizer kernels, gauge
transformation kernels on tomogram families, Crank-Nicolson and
characteristic propagators, and residual checks of the tomographic evolution
equations together with their small-hbar limits.
"""

from .units import INTERNAL, UnitsContext
from .numerics import Axis, Grid, GridFunction, LinearGridOperator, \
    averaged_potential, inverse_derivative, spectral_antiderivative, \
    spectral_derivative
from .fields import (FieldStrengths, GaugeFunction, Potentials,
                     anharmonic_potentials, constant_magnetic, cubic_gauge,
                     field_strengths, free_potentials, gauge_transform_potentials,
                     harmonic_potentials, linear_gauge, polynomial_potentials,
                     potentials_from_descriptor, quadratic_gauge, separable_gauge,
                     time_gauge, uniform_electric, zero_gauge)
from .states import (DensityMatrix, ParticleEnsemble, WaveFunction,
                     density_from_wavefunction, expectation_momentum,
                     expectation_position, gauge_phase_transform, gaussian_packet,
                     harmonic_eigenstate, mixed_density,
                     sample_ensemble_from_wigner, state_fidelity, thermal_density)
from .wigner import (PhaseSpaceFunction, gauge_independent_wigner,
                     gaussian_phase_density, inverse_wigner, kinetic_momentum_view,
                     psf_distance_max, shift_along_p, wigner_transform)
from .tomography import (KernelOperator, Tomogram, TomogramFamily,
                         TomographyParams, compute_tomogram,
                         compute_tomogram_family, default_x_axis,
                         dequantizer_matrix, pairing_superoperator, periodic_axis,
                         quantizer_matrix, radon_slice, radon_slice_vector,
                         reconstruct_density, reconstruct_wigner_from_probability,
                         reconstruct_wigner_from_unit_sphere, tomogram_l1_distance,
                         tomogram_via_trace, unit_sphere_direction)
from .gauge_kernels import (GaugeKernel, apply_kernel, identity_kernel,
                            kernel_from_trace, kernel_linear_chi)
from .operators import (CorrespondenceOperator, StencilSpec, TomOperator,
                        correspondence_operator)
from .evolution import (EQUATION_IDS, AffineGaussianState, PropagatorConfig,
                        ResidualReport, advect_gaussian,
                        backward_characteristics_density, build_hamiltonian,
                        classical_limit_study, classical_tomogram, equation_rhs,
                        liouville_propagate, residual_refinement_study,
                        schrodinger_propagate, tomographic_residual)

__version__ = "0.1.0"
