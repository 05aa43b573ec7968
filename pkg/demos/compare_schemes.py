"""Run the four schemes on one user drop and print how the objective evolves.

    python demos/compare_schemes.py [seed]
"""

import sys

import numpy as np

from fris_isac import SystemConfig, run_am
from fris_isac.orchestrator import trial_streams

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = SystemConfig(am_max_iter=30)
stream = trial_streams(seed, 1)[0]

print(f"{'scheme':>9} {'iters':>5} {'eps':>9} {'eps_r':>9} {'eps_c':>9} {'time':>6}")
for scheme in ("proposed", "conven", "dps", "rand"):
    # every scheme replays the same stream, so users and pilot match
    st = run_am(cfg, scheme, np.random.default_rng(stream))
    print(f"{scheme:>9} {st.iteration:5d} {st.epsilon:9.4f} {st.epsilon_r:9.4f} {st.epsilon_c:9.4f} {st.elapsed:6.1f}")
    marks = [0, 1, 2, 5, 10, 20, st.iteration]
    print("          eps by iteration:", ", ".join(f"{i}:{st.trace[i].epsilon:.3f}" for i in sorted(set(marks)) if i <= st.iteration))
