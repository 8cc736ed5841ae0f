"""Photoacoustic computed tomography toolkit.

Builds dense time- and frequency-domain measurement matrices for a circular
transducer ring, simulates sensor data from synthetic phantoms, reconstructs
images by back-projection or compressed-sensing proximal-gradient iteration,
and benchmarks a portable data-parallel kernel layer against serial
reference implementations.
"""

from .bench import (
    BenchEntry,
    BenchReport,
    bench_matmul,
    bench_recon,
    make_scene,
    profile_breakdown,
)
from .forward import (
    AcousticConfig,
    MeasurementMatrix,
    SensorData,
    TruncationWarning,
    add_noise,
    build_freq_matrix,
    build_time_matrix,
    forward_project,
    read_matrix,
    read_signal,
    write_matrix,
    write_signal,
)
from .geometry import (
    GeometryError,
    ImageField,
    ImagingGrid,
    TransducerRing,
    centered_grid,
    field_from_image,
    make_grid,
    make_point_phantom,
    make_ring,
    make_vessel_phantom,
    read_image,
    read_image_csv,
    read_image_pgm,
    write_image_csv,
    write_image_pgm,
)
from .kernels import (
    TileSpec,
    WorkerPool,
    hardware_worker_count,
    matmul_serial,
    matmul_tiled_parallel,
    matvec_adjoint_parallel,
    matvec_adjoint_serial,
    matvec_parallel,
    matvec_serial,
    tree_reduce,
)
from .recon import (
    ObjectiveParts,
    ReconConfig,
    ReconResult,
    back_project,
    data_gradient,
    estimate_lipschitz,
    iterative_reconstruct,
    objective,
    psnr,
    resolve_config,
    rmse,
    soft_threshold,
    tv_gradient,
    tv_value,
)

__version__ = "0.1.0"
