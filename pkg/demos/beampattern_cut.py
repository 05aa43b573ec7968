"""Print the azimuth cut of the reflected signal for a sensing- and a communication-leaning weight.

    python demos/beampattern_cut.py
"""

import numpy as np

from fris_isac import SystemConfig, run_am
from fris_isac.experiments import beampattern_cut, to_db

for alpha in (0.9, 0.1):
    cfg = SystemConfig(alpha=alpha, am_max_iter=30)
    st = run_am(cfg, "proposed", np.random.default_rng(0))
    az, P = beampattern_cut(st)
    db = to_db(P)
    inner = (P[1:-1] > P[:-2]) & (P[1:-1] >= P[2:])
    peaks = az[1:-1][inner][np.argsort(P[1:-1][inner])[::-1][:3]]
    print(f"alpha={alpha}: top peaks at {np.sort(peaks)} deg, peak/average {P.max() / P.mean():.2f}")
    for a in range(-90, 91, 10):
        g = db[np.argmin(np.abs(az - a))]
        print(f"  {a:4d} {g:7.1f} dB {'#' * int(max(g + 40, 0))}")
