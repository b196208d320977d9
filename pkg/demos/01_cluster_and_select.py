"""Clustering and reliable-sample selection on a toy embedding.

Three tight groups plus a few stragglers between them. k-means assigns
every point to a group; selection then keeps only the points whose
direction is close to their group's center sample.
"""
import numpy as np

from pul.clustering import kmeans
from pul.selection import l2_normalize, select_center_features, select_reliable

rng = np.random.default_rng(0)

# three directions in the positive quadrant, as rectified embeddings would be
directions = np.array([[1.0, 0.1, 0.1], [0.1, 1.0, 0.1], [0.1, 0.1, 1.0]])
core = np.repeat(directions, 20, axis=0) * rng.uniform(1, 3, (60, 1))
core += 0.05 * rng.standard_normal(core.shape)
stragglers = np.abs(rng.standard_normal((6, 3)))
F = np.vstack([core, stragglers])
print("features:", F.shape)

# clustering runs on the raw (un-normalised) features
state = kmeans(F, 3, rng=rng)
print("cluster sizes:", state.cluster_sizes(), "after", state.n_iter, "Lloyd rounds")
print("objective per round:", np.round(state.objective_trace, 2))

# the member nearest to each centroid becomes the cluster's center feature
state = select_center_features(F, state)
print("center samples:", state.center_indices)

# cosine to the center decides reliability; a higher lambda keeps fewer samples
U = l2_normalize(F)
for lam in (0.70, 0.80, 0.90, 0.99):
    mask = select_reliable(U, state, lam)
    print(f"lambda {lam:.2f}: {mask.selected_count:2d} selected, "
          f"stragglers kept: {mask.v[60:].sum()}")
