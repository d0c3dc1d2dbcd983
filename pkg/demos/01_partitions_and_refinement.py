"""Build, validate, and refine a simplicial partition.

Delaunay-triangulates a random planar point set, checks the partition
properties (full coverage, positive measures, face-to-face contacts),
then applies longest-edge bisection sweeps and tracks the mesh metrics.
"""

import numpy as np

from fnelearn import (
    NodeSet,
    bisect_longest_edge,
    delaunay_triangulate,
    locate,
    partition_metrics,
    validate_partition,
)

rng = np.random.default_rng(0)
points = rng.uniform(0.0, 1.0, (40, 2))

partition = delaunay_triangulate(NodeSet(points))
report = validate_partition(partition)
print(f"Delaunay partition: {partition.n_simplices} triangles, valid = {report.ok}")

# barycentric point location: query a point and reconstruct it from the weights
query = np.array([0.4, 0.6])
loc = locate(partition, query)
verts = partition.nodes.points[partition.simplices[loc.simplex_index]]
reconstructed = loc.weights @ verts
print(f"locate({query}) -> triangle {loc.simplex_index}, weights {np.round(loc.weights, 4)}")
print(f"reconstruction error: {np.linalg.norm(reconstructed - query):.2e}")

# longest-edge bisection keeps the mesh conforming and shrinks the edges
print("\nsweep  triangles  longest_edge  min_measure  valid")
for sweep in range(6):
    m = partition_metrics(partition)
    ok = validate_partition(partition).ok
    print(f"{sweep:5d}  {partition.n_simplices:9d}  {m.longest_edge:12.6f}  "
          f"{m.min_measure:11.3e}  {ok}")
    partition = bisect_longest_edge(partition)
