# Multi-hop features of a synthetic subject.
# Row 0 is the node's own ROI; row k counts distance-k neighbours per ROI, each weighted by structural similarity.

import numpy as np

from gyralkan.features import encode_population
from gyralkan.synth import PopulationSpec, generate_population

spec = PopulationSpec(n_nodes=120, n_rois=20, n_subjects=3, seed=1)
template, subjects, truth = generate_population(spec)
print("template:", template.n, "nodes,", len(template.edges), "edges")

ds = encode_population(subjects, l=2)
print("dataset:", ds.data.shape, "(samples, hops+1, ROIs)")

x = ds.data[0]
print("node", ds.node_ids[0], "of", ds.subject_ids[0], "ROI", ds.rois[0])
for k, row in enumerate(x):
    nz = np.flatnonzero(row)
    print(f"  hop {k}:", dict(zip(nz.tolist(), np.round(row[nz], 3).tolist())))

# most entries are zero, which is why training upweights the non-zero ones
print("fraction non-zero in hops >= 1:", np.count_nonzero(ds.data[:, 1:]) / ds.data[:, 1:].size)
