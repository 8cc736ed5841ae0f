"""Where does iterative reconstruction spend its time?

Profiles one 90-iteration solve on a 64x64 scene and attributes wall time
to the gradient matrix products (Kx and K^H r), the TV gradient, the prox,
and objective evaluation. The two dense products dominate by a wide margin,
which is why the kernel layer parallelizes exactly those.
"""

import pactkit as pk

report = pk.profile_breakdown(64, 32, 128, pk.ReconConfig(iterations=90), seed=0)

print(report.scenario)
print(f"matrix: {report.environment['matrix_shape'][0]} x "
      f"{report.environment['matrix_shape'][1]}")
total = report.entry("iterative_run").wall_seconds
print(f"one solve: {total:.2f} s over {report.environment['iterations']} iterations\n")
print(f"{'stage':<20} {'seconds':>9}  {'share':>6}")
for stage, row in report.breakdown.items():
    print(f"{stage:<20} {row['seconds']:>9.3f}  {row['percent']:>5.1f}%")

# the same solve on the parallel kernels
fast = pk.bench_recon(64, 32, 128, pk.ReconConfig(iterations=90), reps=3, seed=0)
t_serial = fast.entry("iterative_serial").wall_seconds
t_parallel = fast.entry("iterative_parallel").wall_seconds
print(f"\nserial kernels {t_serial:.2f} s -> parallel kernels {t_parallel:.2f} s "
      f"(verified: {fast.entry('iterative_parallel').verification})")
