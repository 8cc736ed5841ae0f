"""Serial triple-loop matmul versus the tiled parallel kernel.

The tiled kernel stages operand blocks in worker-local scratch and splits
the output across workers; every timed result is first verified against the
serial oracle. Also shows the pairwise-halving tree reduction against plain
and compensated summation.
"""

import math

import numpy as np

import pactkit as pk
from pactkit.kernels import hardware_worker_count, tree_reduce

print(f"hardware workers: {hardware_worker_count()}")

report = pk.bench_matmul(512, 512, 512, workers=[1, 2, 4], reps=3, seed=0)
print(report.to_text())

# tree reduction: deterministic and far more accurate than left-to-right sums
rng = np.random.default_rng(0)
values = rng.standard_normal(10**6) * 1e3
exact = math.fsum(values)
naive = 0.0
for chunk in np.array_split(values, 1000):  # left-to-right in chunks
    for v in chunk:
        naive += float(v)
tree = tree_reduce(values)
print(f"sum of 1e6 doubles: tree error {abs(tree - exact):.3e}, "
      f"left-to-right error {abs(naive - exact):.3e}")
print(f"tree result bit-stable: {tree_reduce(values) == tree}")
