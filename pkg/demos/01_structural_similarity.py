# Structural similarity between nodes of a small graph.
# Two nodes look alike when the sorted degrees of their k-hop rings line up cheaply under DTW.

import numpy as np

from gyralkan.graph import degree_sequence, khop_neighborhood, make_graph
from gyralkan.structsim import dtw_distance, similarity_matrix, structural_similarity

# triangle 0-1-2 with a tail 0-3-4-5
g = make_graph(6, [(0, 1), (0, 2), (1, 2), (0, 3), (3, 4), (4, 5)], rois=[0, 1, 2, 0, 1, 2], n_rois=3)
print("degrees", g.degrees)

for u in range(g.n):
    print(u, "ring-1 degrees", degree_sequence(g, khop_neighborhood(g, u, 1)))

print("dtw([2,2,2], [2,3]) =", dtw_distance([2, 2, 2], [2, 3]))   # 0.5: one 2->3 step
print("S_1(0, 3) =", structural_similarity(g, 0, 3, 1))            # exp(-0.5)

# the whole S_1, only where nodes are 1 hop apart
S1 = similarity_matrix(g, 1).matrix.toarray()
np.set_printoptions(precision=3, suppress=True)
print(S1)
