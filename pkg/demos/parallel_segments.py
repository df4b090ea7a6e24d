"""Two parallel segments: build the structure, query it, draw it.

Run from the repository root:  python demos/parallel_segments.py
Writes parallel_level3.svg in the current directory.
"""

import numpy as np

from segavd.avd import BuildConfig, build
from segavd.render import render_svg
from segavd.workbench import brute_force_nn, two_parallel

S = two_parallel()
print("segments:")
for k in range(S.n):
    print(f"  {k}: {S.A[k]} -> {S.B[k]}")
print(f"min gap {S.min_gap:.3f}, spread {S.spread:.2f}")

# %% build at eps = 1
dag = build(S, 1.0, BuildConfig(seed=0))
st = dag.stats()
print(f"\nnodes {st.node_count}, levels {st.levels}, final leaves {st.final_leaf_count}, "
      f"max out-degree {st.max_out_degree}, uncovered audit rate {st.uncovered_sample_rate}")

# %% a few queries against the brute-force oracle
rng = np.random.default_rng(1)
for q in [np.array([5.0, 0.4]), np.array([5.0, 1.6]), np.array([-1.0, 1.0])] + list(rng.uniform(-2, 12, (3, 2))):
    res = dag.query(q)
    best, dist = brute_force_nn(S, q)
    print(f"q={np.round(q, 3)}  answer {res.segment} at {res.distance:.3f}, "
          f"oracle {best} at {dist:.3f}, path {res.path_length}")

# %% level 3 ellipsoids are long strips between the segments
with open("parallel_level3.svg", "w") as fh:
    fh.write(render_svg(S, dag, level=3))
print("\nwrote parallel_level3.svg")
