"""Stabilized leapfrog local time-stepping for the wave equation.

Mass-lumped P1 finite elements, damped Chebyshev local time-stepping,
spectral stability tools and an experiment harness.
"""

from lts_wave.cheb import (
    PolyBoundsReport,
    StabParams,
    cheb_deriv,
    cheb_eval,
    eval_P,
    eval_P_recursive,
    eval_P_reduced,
    make_stab_params,
    verify_bounds,
)
from lts_wave.fem import (
    LumpedSystem,
    apply_AS,
    assemble,
    error_norms,
    interpolate,
    project_coarse,
    project_fine,
    t_inner,
)
from lts_wave.lts import (
    EnergySample,
    WaveState,
    discrete_energy,
    initial_state,
    lts_step,
    run,
)
from lts_wave.mesh import (
    DofPartition,
    Mesh,
    MeshStats,
    build_interval_mesh,
    build_lshape_graded,
    mesh_stats,
    partition_dofs,
    read_mesh,
    write_mesh,
)
from lts_wave.spectral import (
    StabilityReport,
    StabilizedOperator,
    apply_stabilized,
    block_identity_check,
    critical_dt_scan,
    dense_stabilized,
    extreme_eigs,
    max_stable_dt,
    spectrum_sweep,
)

__version__ = "0.1.0"
