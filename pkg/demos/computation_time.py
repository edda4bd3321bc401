"""
How beamformer cost grows with the number of users
==================================================

Times the pseudo-inverse receivers against a forward pass of an (untrained)
network at 64 receive antennas. Absolute numbers depend on the machine;
the interesting part is the growth from the smallest to the largest N.
"""

from nnbf.cli import run_benchmark, scaling_report

records = run_benchmark(ues=[4, 8, 16, 32], m_rx=64, k=12, repetitions=10)
for r in records:
    print(f"{r.method:5s} N={r.n_ues:2d}  {r.mean_ms:8.3f} ms  (+- {r.std_ms:.3f})")

for method, ratio in scaling_report(records).items():
    print(f"{method}: t(N=32) / t(N=4) = {ratio:.1f}")
