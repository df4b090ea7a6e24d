"""The crossing grid: every odd point has exactly one acceptable answer.

Verticals v_i and horizontals h_j cross at height offset delta. Between two
horizontals, right above v_i, only v_i is within a factor 1 + eps, so a
correct cover needs a separate element for each of the (n+1) n such points.

Run from the repository root:  python demos/griddle_witnesses.py
Pass --build to also build the structure for n = 1 (about a minute).
"""

import sys

from segavd.avd import BuildConfig, build
from segavd.workbench import gen_griddle, verify_griddle

for n in (2, 4, 8, 16):
    G = gen_griddle(n, 1.0, 0.2)
    rep = verify_griddle(G)
    print(f"n={n:2d}: {G.segments.n} segments, {rep.points} odd points, "
          f"nearest other segment >= {rep.min_other_distance:.2f}, "
          f"best other ratio {rep.min_other_ratio:.2f}, failures {len(rep.failures)}")

# %% the structure reproduces the unique answers
if "--build" in sys.argv:
    G = gen_griddle(1, 1.0, 0.2)
    dag = build(G.segments, 1.0, BuildConfig(seed=0, audit=False))
    for i, q in G.odd_points():
        print(f"q={q.tolist()}  expected {G.verticals[i]}, got {dag.query(q).segment}")
    print(f"{dag.stats().node_count} nodes")
