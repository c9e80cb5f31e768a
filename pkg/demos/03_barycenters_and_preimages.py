"""Synthesize new point clouds by arithmetic in LOT space.

Because LOT embeddings live in a flat Euclidean space, averages and
interpolations of embeddings are meaningful: the barycenter of two samples
is itself a displacement field, and its pre-image (reference + displacement)
is a synthetic point cloud that lies "between" the inputs in Wasserstein
geometry.
"""

import numpy as np

from lotspace import lot
from lotspace.data_model import PointCloud

rng = np.random.default_rng(7)
d = 2

# Two clearly different clouds: one centered at the origin, one shifted and
# stretched along the first axis.
cloud_a = PointCloud(rng.normal(size=(400, d)), np.full(400, 1 / 400))
pts_b = rng.normal(size=(400, d)) * np.array([2.0, 0.6]) + np.array([4.0, 1.0])
cloud_b = PointCloud(pts_b, np.full(400, 1 / 400))

ref = lot.build_reference([cloud_a, cloud_b], m=30, method="kmeans", seed=0)
emb_a = lot.embed(ref, cloud_a)
emb_b = lot.embed(ref, cloud_b)

print("cloud means")
print(f"  A        : {np.round(cloud_a.points.mean(axis=0), 2)}")
print(f"  B        : {np.round(cloud_b.points.mean(axis=0), 2)}")

# Displacement interpolation: walk the LOT-space segment from A to B and
# push the reference through each intermediate map.
for t in (0.0, 0.25, 0.5, 0.75, 1.0):
    mid = lot.interpolate(emb_a, emb_b, t)
    synthetic = lot.preimage(ref, mid)
    mean = synthetic.points.mean(axis=0)
    print(f"  t = {t:4.2f} : {np.round(mean, 2)}")

# The barycenter of both embeddings equals the midpoint of the segment.
bary = lot.barycenter([emb_a, emb_b], weights=[0.5, 0.5])
mid = lot.interpolate(emb_a, emb_b, 0.5)
print(f"barycenter == midpoint: {np.allclose(bary.z, mid.z)}")

# A zero displacement field reproduces the reference itself.
identity = lot.LOTEmbedding(np.zeros(ref.m * ref.d), ref.hash, ref.m, ref.d)
print(f"preimage(0) is the reference: "
      f"{np.array_equal(lot.preimage(ref, identity).points, ref.points)}")
