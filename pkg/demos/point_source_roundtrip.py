"""Round trip a point source: simulate ring data, then back-project it.

A single bright pixel produces one delayed spike per sensor; delay-and-sum
back-projection focuses those arcs back onto the source. The script checks
how close the reconstructed peak lands to the true pixel and writes both
images as 16-bit PGM for viewing.
"""

from pathlib import Path

import numpy as np

import pactkit as pk

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# 32x32 grid, 0.1 mm pitch, ring of 64 sensors well outside the field of view
grid = pk.centered_grid(32, 32, 1e-4)
ring = pk.make_ring(64, 5e-3, (0.0, 0.0), grid)
acoustic = pk.AcousticConfig(c=1500.0, dt=1e-7, q_s=64, q_n=64)

source = pk.make_point_phantom(grid, 11, 21, 1.0)
K = pk.build_time_matrix(grid, ring, acoustic)
print(f"measurement matrix: {K.rows} x {K.cols} "
      f"({K.rows * K.cols * 8 / 1e6:.1f} MB dense)")

y = pk.forward_project(K, source)
print(f"sensor data: {y.sensors} sensors x {y.samples} samples, "
      f"peak amplitude {np.max(np.abs(y.values)):.3e}")

recon = pk.back_project(K, y)
peak = int(np.argmax(np.abs(recon.values)))
pi, pj = peak % grid.nx, peak // grid.nx
print(f"true source at (11, 21), reconstructed peak at ({pi}, {pj})")

pk.write_image_pgm(source, out / "point_truth.pgm")
pk.write_image_pgm(recon, out / "point_backprojection.pgm")
print(f"images written to {out}/")

# the frequency-domain matrix reconstructs the same source
Kf = pk.build_freq_matrix(grid, ring, acoustic)
yf = pk.forward_project(Kf, source)
recon_f = pk.back_project(Kf, yf)
peak_f = int(np.argmax(np.abs(recon_f.values)))
print(f"frequency-domain peak at ({peak_f % grid.nx}, {peak_f // grid.nx})")
