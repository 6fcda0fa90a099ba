"""Rate optimization for RIS-assisted MIMO links modeled as coupled thin-wire dipoles."""

from .bundle import load_impedance_set, save_impedance_set
from .channel import (
    ReducedNetwork,
    RisLoadState,
    achievable_rate,
    end_to_end_channel,
    reduce_network,
    ris_impedance_matrix,
)
from .em_model import (
    Dipole,
    ImpedanceSet,
    Scene,
    assemble_impedance_set,
    mutual_impedance,
    place_clusters,
)
from .optimizer import (
    Branch,
    DecoupledElement,
    DetCoefficients,
    OptimizerTrace,
    bcd_sweep,
    decouple_element,
    det_coefficients,
    grid_baseline_sweep,
    optimal_reactance,
    solve_p0,
    waterfill,
)

__version__ = "0.1.0"
