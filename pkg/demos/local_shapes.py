"""Distance tensors, the capsule and its inscribed ellipsoid at one point.

Run from the repository root:  python demos/local_shapes.py
"""

import numpy as np

from segavd.capsules import build_capsule
from segavd.ellipsoids import inscribed_ellipsoid
from segavd.geometry import SegmentSet, local_feature_size
from segavd.tensors import ellipsoid_axes, tensor_stack

S = SegmentSet(np.array([[0.0, 0.0], [0.0, 2.0], [12.0, -1.0]]),
               np.array([[10.0, 0.0], [10.0, 2.0], [12.0, 3.0]]))
x = np.array([5.0, 0.5])
phi = local_feature_size(x, S).phi
print(f"x = {x}, distances {np.round(S.distances(x), 3)}, local feature size {phi:.3f}")

# %% one tensor per segment: long along the segment, short across it
for k, H in enumerate(tensor_stack(x, S)):
    w, V = ellipsoid_axes(H)
    print(f"segment {k}: semi-axes {np.round(w, 3)}")

# %% the capsule at radius phi and the largest ellipsoid inside it
C = build_capsule(S, x, phi)
E = inscribed_ellipsoid(C)
print(f"inscribed ellipsoid semi-axes {np.round(E.semi_axes, 3)}")
print(f"directions (columns)\n{np.round(E.directions, 3)}")
