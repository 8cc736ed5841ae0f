"""Compressed-sensing reconstruction from an undersampled sensor ring.

With only a quarter of the sensors, plain back-projection smears arc
artifacts across the image while the L1+TV-regularized iterative solver
still recovers the sparse vessel structure. The script prints RMSE against
the ground-truth phantom for both methods and saves all images.
"""

from pathlib import Path

import numpy as np

import pactkit as pk

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)


def unit_peak(v):
    p = np.max(np.abs(v))
    return v / p if p > 0 else v


grid, full_ring, acoustic, phantom = pk.make_scene(64, 32, 128, seed=1)
print(f"vessel phantom: {np.count_nonzero(phantom.values)} of {grid.size} pixels lit "
      f"({100 * np.count_nonzero(phantom.values) / grid.size:.1f}% fill)")
pk.write_image_pgm(phantom, out / "vessel_truth.pgm")

truth = unit_peak(phantom.values)
for sensors in (32, 8):  # full ring, then 25% undersampling
    ring = pk.make_ring(sensors, full_ring.radius, (0.0, 0.0), grid)
    K = pk.build_time_matrix(grid, ring, acoustic)
    y = pk.forward_project(K, phantom)

    bp = pk.back_project(K, y)
    result = pk.iterative_reconstruct(K, y, pk.ReconConfig(iterations=90))

    rmse_bp = np.sqrt(np.mean((unit_peak(bp.values) - truth) ** 2))
    rmse_ir = np.sqrt(np.mean((unit_peak(result.image.values) - truth) ** 2))
    print(f"{sensors:2d} sensors: RMSE back-projection {rmse_bp:.4f}, "
          f"iterative {rmse_ir:.4f} "
          f"(alpha {result.alpha_used:.2e}, beta {result.beta_used:.2e}, "
          f"objective {result.objective_history[0]:.2e} -> "
          f"{result.objective_history[-1]:.2e})")

    pk.write_image_pgm(bp, out / f"vessel_bp_{sensors}sensors.pgm")
    pk.write_image_pgm(result.image, out / f"vessel_ir_{sensors}sensors.pgm")

print(f"images written to {out}/")
