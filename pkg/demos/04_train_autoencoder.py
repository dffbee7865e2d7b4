# Train the autoencoder for a few epochs and compare the loss weighting on non-zero entries.

from gyralkan.autoencoder import Autoencoder, TrainConfig, train
from gyralkan.features import encode_population
from gyralkan.metrics import nonzero_mse, recon_report
from gyralkan.synth import PopulationSpec, generate_population

_, subjects, _ = generate_population(PopulationSpec(n_nodes=120, n_rois=20, n_subjects=4, seed=2))
ds = encode_population(subjects, l=1)

for lam in (2.0, 0.0):
    ae = Autoencoder.init(ds.n_rois, ds.l, d_theta=32, latent=32, seed=0)
    ae, hist = train(ae, ds, TrainConfig(lam=lam, lr=1e-3, max_epochs=15, seed=0))
    _, chi_hat = ae.decode_batch(ae.embed(ds))
    rep = recon_report(ds.data, chi_hat)
    print(f"lambda={lam}: loss {hist[0]['train_loss']:.3f} -> {hist[-1]['train_loss']:.3f}, "
          f"mse {rep.mse:.4f}, non-zero mse {nonzero_mse(ds.data, chi_hat):.4f}, pcc {rep.pcc:.3f}")
