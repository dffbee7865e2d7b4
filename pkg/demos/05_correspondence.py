# Match every node of one subject to its closest node in each other subject.
# Synthetic subjects come with the true node map, so we can score the matches directly.

import numpy as np

from gyralkan.autoencoder import Autoencoder, TrainConfig, train
from gyralkan.correspond import (chance_hit_rate, compose_truth, ground_truth_accuracy, match_population,
                                 random_match_accuracy, roi_hit_rate, uniqueness_rate)
from gyralkan.features import encode_population
from gyralkan.synth import PopulationSpec, generate_population

_, subjects, truth = generate_population(PopulationSpec(n_nodes=150, n_rois=30, n_subjects=4, seed=3))
graphs = {g.subject_id: g for g in subjects}
ds = encode_population(subjects, l=2)
ae, _ = train(Autoencoder.init(ds.n_rois, ds.l, d_theta=32, latent=32, seed=0), ds,
              TrainConfig(lr=1e-3, max_epochs=5, seed=0))
delta = ae.embed(ds)

sid = np.asarray(ds.subject_ids)
anchor = "subj000"
targets = {s: delta[sid == s] for s in graphs if s != anchor}
corr = match_population(delta[sid == anchor], targets, threshold=0.9, anchor_subject=anchor,
                        anchor_ids=ds.node_ids[sid == anchor],
                        target_ids={s: ds.node_ids[sid == s] for s in targets})

t = compose_truth(truth, anchor)
print(len(corr.matches), "matches above 0.9")
print(f"true-node accuracy {ground_truth_accuracy(corr, t):.1f}%  "
      f"(random {random_match_accuracy(corr, t, {s: graphs[s].n for s in targets}):.2f}%)")
print(f"ROI hit rate {roi_hit_rate(corr, graphs):.1f}%  (chance {chance_hit_rate(corr, graphs):.2f}%)")
print(f"matched without a close runner-up: {uniqueness_rate(corr):.1f}%")
