"""Bit error rate of the optimized layout against receiver noise power (small run).

    python demos/ber_vs_noise.py
"""

from fris_isac import SystemConfig
from fris_isac.comm import QAM16, QPSK
from fris_isac.experiments import ber_curves

noise = (-40.0, -60.0, -80.0)
for alpha in (0.1, 0.9):
    curves = ber_curves(SystemConfig(alpha=alpha, am_max_iter=30), "proposed", (QPSK, QAM16), noise,
                        trials=2, seed=0, blocks=10, draws=20)
    for m in (QPSK, QAM16):
        row = "  ".join(f"{n:.0f} dBm: {b:.4f}" for n, b in zip(noise, curves.ber[m]))
        print(f"alpha={alpha} {m:>5}  {row}")
