"""summlab: a desk-scale numerical laboratory for generalized Riesz means,
strong summability functionals, and the frequency/physical-space
decompositions behind their weak-type theory."""

__version__ = "0.1.0"

from .distance import (CospherePoint, HomogeneousDistance, gauss_map_inverse,
                       make_builtin, make_user_supplied, to_cosphere)
from .spectral import (GridFunction, SpectralField, TorusGrid, analyze,
                       lp_norm, synthesize, weak_lp_quasinorm)
from .riesz import (RieszSpec, critical_index, maximal_over_t, riesz_mean_rd,
                    riesz_mean_torus, s_mean, subordination_residual,
                    transplant)
from .strong import (DensitySet, StrongMeanProfile, almost_convergence_set,
                     strong_mean, sup_strong_mean, weak_type_ratio)
from .decomp import (CapSystem, CZProfile, KernelTile, RingSystem, cz_profile,
                     kernel_eval, lp_projector, make_cap_system,
                     multiplier_shell_decay, peetre_maximal, square_function,
                     whitney_decompose)
from .sharpness import (PlateFunction, ScanResult, plate_transform,
                        riesz_on_plate, sharpness_scan)
from .atoms import Atom, atom_maximal, atom_scaling_scan, make_atom
