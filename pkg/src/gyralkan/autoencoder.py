"""Two-stage KAN autoencoder over multi-hop features, with selective reconstruction loss."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FeatureDataset, MultiHopFeature
from .kan import KanLayer, SplineGrid, xavier_init
from .seeding import derive_rng

log = logging.getLogger(__name__)

LAYER_NAMES = ("phi_roi", "phi_mh", "phi_mh_hat", "phi_roi_hat")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 2.0
    batch_size: int = 128
    max_epochs: int = 100
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    min_lr: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.lam < 0 or self.adam_eps <= 0:
            raise ValueError("lr and lam must be >= 0, adam_eps > 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.plateau_patience < 1:
            raise ValueError("batch_size, max_epochs and plateau_patience must be positive")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatentEmbedding:
    delta: np.ndarray  # (latent,)
    theta: np.ndarray  # (l+1, d_theta)
    node: tuple[str, int] = ("", -1)


@dataclass
class Autoencoder:
    """phi_roi and phi_roi_hat act on each hop row independently."""

    phi_roi: KanLayer
    phi_mh: KanLayer
    phi_mh_hat: KanLayer
    phi_roi_hat: KanLayer
    l: int

    def __post_init__(self):
        r, dt = self.phi_roi.d_in, self.phi_roi.d_out
        lat = self.phi_mh.d_out
        ok = (self.phi_mh.d_in == (self.l + 1) * dt and self.phi_mh_hat.d_in == lat
              and self.phi_mh_hat.d_out == (self.l + 1) * dt
              and self.phi_roi_hat.d_in == dt and self.phi_roi_hat.d_out == r)
        if not ok:
            raise ValueError("layer widths do not compose into R -> d_theta -> latent -> d_theta -> R")

    @classmethod
    def init(cls, n_rois: int, l: int, d_theta: int = 128, latent: int = 128,
             grid: SplineGrid | None = None, seed: int = 0) -> "Autoencoder":
        grid = grid or SplineGrid()
        dims = [(n_rois, d_theta), ((l + 1) * d_theta, latent), (latent, (l + 1) * d_theta), (d_theta, n_rois)]
        layers = [xavier_init(a, b, grid, derive_rng(seed, "init", i)) for i, (a, b) in enumerate(dims)]
        return cls(*layers, l=l)

    @property
    def layers(self) -> dict[str, KanLayer]:
        return {name: getattr(self, name) for name in LAYER_NAMES}

    @property
    def n_rois(self) -> int:
        return self.phi_roi.d_in

    @property
    def d_theta(self) -> int:
        return self.phi_roi.d_out

    @property
    def latent(self) -> int:
        return self.phi_mh.d_out

    def copy(self) -> "Autoencoder":
        return Autoencoder(*(layer.copy() for layer in self.layers.values()), l=self.l)

    def _check(self, chi: np.ndarray):
        if chi.shape[-2:] != (self.l + 1, self.n_rois):
            raise ValueError(f"feature shape {chi.shape[-2:]} does not match model ({self.l + 1}, {self.n_rois})")

    def encode_batch(self, chi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(B, l+1, R)`` -> ``(delta (B, latent), theta (B, l+1, d_theta))``."""
        chi = np.asarray(chi, dtype=np.float64)
        self._check(chi)
        theta = self.phi_roi.forward(chi)
        delta = self.phi_mh.forward(theta.reshape(theta.shape[:-2] + (-1,)))
        return delta, theta

    def decode_batch(self, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = self.phi_mh_hat.forward(delta)
        theta_hat = z.reshape(z.shape[:-1] + (self.l + 1, self.d_theta))
        return theta_hat, self.phi_roi_hat.forward(theta_hat)

    def embed(self, data: FeatureDataset, batch_size: int = 1024) -> np.ndarray:
        out = np.zeros((len(data), self.latent))
        for s in range(0, len(data), batch_size):
            out[s:s + batch_size] = self.encode_batch(data.data[s:s + batch_size])[0]
        return out


def encode(ae: Autoencoder, chi) -> LatentEmbedding:
    rows = chi.rows if isinstance(chi, MultiHopFeature) else np.asarray(chi)
    delta, theta = ae.encode_batch(rows)
    node = (chi.subject_id, chi.node) if isinstance(chi, MultiHopFeature) else ("", -1)
    return LatentEmbedding(delta, theta, node)


def decode(ae: Autoencoder, emb: LatentEmbedding) -> tuple[np.ndarray, np.ndarray]:
    if emb.delta.shape[-1] != ae.latent:
        raise ValueError(f"embedding width {emb.delta.shape[-1]} != model latent {ae.latent}")
    return ae.decode_batch(emb.delta)


def selective_loss(chi_hat, chi, theta_hat, theta, lam: float) -> float:
    """Squared Frobenius reconstruction error with residuals scaled by ``1 + lam * target``."""
    chi_hat, chi, theta_hat, theta = (np.asarray(a, dtype=np.float64) for a in (chi_hat, chi, theta_hat, theta))
    if chi_hat.shape != chi.shape or theta_hat.shape != theta.shape:
        raise ValueError(f"shape mismatch: chi {chi_hat.shape} vs {chi.shape}, theta {theta_hat.shape} vs {theta.shape}")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    rc = (chi_hat - chi) * (1.0 + lam * chi)
    rt = (theta_hat - theta) * (1.0 + lam * theta)
    return float(np.sum(rc * rc) + np.sum(rt * rt))


def loss_and_grads(ae: Autoencoder, chi: np.ndarray, lam: float, theta_target: np.ndarray | None = None):
    """Mean per-sample selective loss over a batch and its parameter gradients.

    The theta target is the encoder's own theta with no gradient through the
    target side; pass ``theta_target`` to pin it (used by gradient checks).
    """
    chi = np.asarray(chi, dtype=np.float64)
    ae._check(chi)
    bsz = chi.shape[0]
    lp = ae.l + 1
    theta, c_roi = ae.phi_roi.forward(chi, keep_cache=True)
    z = theta.reshape(bsz, lp * ae.d_theta)
    delta, c_mh = ae.phi_mh.forward(z, keep_cache=True)
    zh, c_mhh = ae.phi_mh_hat.forward(delta, keep_cache=True)
    theta_hat = zh.reshape(bsz, lp, ae.d_theta)
    chi_hat, c_roih = ae.phi_roi_hat.forward(theta_hat, keep_cache=True)

    tt = theta if theta_target is None else theta_target
    mc = 1.0 + lam * chi
    mt = 1.0 + lam * tt
    rc = (chi_hat - chi) * mc
    rt = (theta_hat - tt) * mt
    loss = (np.sum(rc * rc) + np.sum(rt * rt)) / bsz

    g_chi_hat = (2.0 / bsz) * rc * mc
    g_roih = ae.phi_roi_hat.backward(c_roih, g_chi_hat)
    g_theta_hat = g_roih.x + (2.0 / bsz) * rt * mt
    g_mhh = ae.phi_mh_hat.backward(c_mhh, g_theta_hat.reshape(bsz, -1))
    g_mh = ae.phi_mh.backward(c_mh, g_mhh.x)
    g_roi = ae.phi_roi.backward(c_roi, g_mh.x.reshape(bsz, lp, ae.d_theta))
    grads = {"phi_roi": g_roi.params(), "phi_mh": g_mh.params(),
             "phi_mh_hat": g_mhh.params(), "phi_roi_hat": g_roih.params()}
    return float(loss), grads


def dataset_loss(ae: Autoencoder, data: np.ndarray, lam: float, batch_size: int = 1024) -> float:
    """Mean per-sample selective loss, summed in fixed batch order."""
    total = 0.0
    for s in range(0, len(data), batch_size):
        chi = data[s:s + batch_size]
        delta, theta = ae.encode_batch(chi)
        theta_hat, chi_hat = ae.decode_batch(delta)
        rc = (chi_hat - chi) * (1.0 + lam * chi)
        rt = (theta_hat - theta) * (1.0 + lam * theta)
        total += float(np.sum(rc * rc) + np.sum(rt * rt))
    return total / len(data)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, beta1: float = 0.5,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update, applied in place to ``params``."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, p in params.items():
        g = grads[k]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {k}")
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without relative improvement."""

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 10, min_lr: float = 1e-6,
                 threshold: float = 1e-4):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric < self.best * (1.0 - self.threshold):
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs > self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


def _flat_params(ae: Autoencoder) -> dict[str, np.ndarray]:
    return {f"{ln}.{pn}": arr for ln, layer in ae.layers.items() for pn, arr in layer.params().items()}


def train(ae: Autoencoder, data: FeatureDataset, cfg: TrainConfig, val: FeatureDataset | None = None,
          copy: bool = True):
    """Mini-batch Adam training; returns ``(model, history)``.

    ``history`` holds one record per epoch with the full-pass training loss
    (and validation loss when ``val`` is given) evaluated after the epoch.
    The scheduler watches the validation loss when present, else the
    training loss.
    """
    if len(data) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if (data.l, data.n_rois) != (ae.l, ae.n_rois):
        raise TrainingError(f"dataset (l={data.l}, R={data.n_rois}) does not match model (l={ae.l}, R={ae.n_rois})")
    if copy:
        ae = ae.copy()
    params = _flat_params(ae)
    state = AdamState()
    sched = ReduceLROnPlateau(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, min(cfg.min_lr, cfg.lr))
    rng = derive_rng(cfg.seed, "shuffle")
    x = data.data
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        lr = sched.lr
        order = rng.permutation(len(x))
        for s in range(0, len(x), cfg.batch_size):
            loss, grads = loss_and_grads(ae, x[order[s:s + cfg.batch_size]], cfg.lam)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch offset {s}, lr {lr}")
            flat = {f"{ln}.{pn}": g for ln, lg in grads.items() for pn, g in lg.items()}
            adam_step(params, flat, state, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        rec = {"epoch": epoch, "lr": lr, "train_loss": dataset_loss(ae, x, cfg.lam)}
        if val is not None and len(val):
            rec["val_loss"] = dataset_loss(ae, val.data, cfg.lam)
        if not np.isfinite(rec["train_loss"]):
            raise TrainingError(f"non-finite training loss after epoch {epoch}")
        sched.step(rec.get("val_loss", rec["train_loss"]))
        history.append(rec)
        log.debug("epoch %d lr %.3g loss %.6g", epoch, lr, rec["train_loss"])
    return ae, history
