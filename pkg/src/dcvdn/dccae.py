"""Correlated autoencoders: two encoder/decoder pairs trained jointly on a
canonical-correlation objective plus reconstruction penalties.

The correlation term is the sum of the top-L singular values of the whitened
cross-covariance T = S11^(-1/2) S12 S22^(-1/2) of the two encoded batches,
which equals the constrained bilinear objective at its optimal projections,
so the projections themselves never enter training. They are recovered in
closed form afterwards (fit_projections), which also pins the whitening
constraint U' S11 U = I. Gradients of the correlation with respect to the
encoded batches are analytic and verified by finite differences in the test
suite.

Reconstruction penalties default to squared Euclidean norms for smooth
gradients; recon="abs" switches to the literal unsquared norm, smoothed at
1e-6 so the gradient exists at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmall, InvalidInput
from .numkit import Adam, SeededRng, as_matrix, svd, sym_inv_sqrt
from .visual import ViewSequence
from . import serialize as ser

MAGIC = b"DCVDN-CCAE1"

_ABS_SMOOTH = 1e-6


class Mlp:
    """Fully connected stack: tanh on hidden layers, configurable output."""

    def __init__(self, sizes: list[int], out_activation: str = "identity",
                 rng: SeededRng | None = None):
        if len(sizes) < 2:
            raise InvalidInput("Mlp needs at least input and output sizes")
        if out_activation not in ("identity", "tanh"):
            raise InvalidInput(f"unknown activation {out_activation!r}")
        self.sizes = list(sizes)
        self.out_activation = out_activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            if rng is None:
                w = np.zeros((fan_out, fan_in))
            else:
                lim = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-lim, lim, (fan_out, fan_in))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def zero_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params()]

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        acts = [x]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            if i < last or self.out_activation == "tanh":
                z = np.tanh(z)
            acts.append(z)
        return acts[-1], acts

    def backward(self, acts: list[np.ndarray], dout: np.ndarray):
        """Returns (dx, grads) with grads ordered like params()."""
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        last = len(self.weights) - 1
        d = np.asarray(dout, dtype=np.float64)
        for i in range(last, -1, -1):
            out_i = acts[i + 1]
            if i < last or self.out_activation == "tanh":
                d = d * (1.0 - out_i * out_i)
            grads[2 * i] = d.T @ acts[i]
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.weights[i]
        return d, grads


def cca_corr(h1: np.ndarray, h2: np.ndarray, top: int, ridge: float):
    """Sum of the top-`top` singular values of the whitened cross-covariance,
    with analytic gradients with respect to both inputs.

    Columns are centered internally; covariances use 1/(M-1) plus ridge*I.
    """
    h1 = as_matrix(h1, "h1")
    h2 = as_matrix(h2, "h2")
    m = h1.shape[0]
    if h2.shape[0] != m:
        raise InvalidInput("h1 and h2 must have the same number of rows")
    if m <= top:
        raise BatchTooSmall(f"batch size {m} must exceed projection dim {top}")
    if top < 1 or top > min(h1.shape[1], h2.shape[1]):
        raise InvalidInput(f"projection dim {top} outside [1, min(d1, d2)]")

    h1c = h1 - h1.mean(axis=0)
    h2c = h2 - h2.mean(axis=0)
    denom = m - 1
    s11 = h1c.T @ h1c / denom + ridge * np.eye(h1.shape[1])
    s22 = h2c.T @ h2c / denom + ridge * np.eye(h2.shape[1])
    s12 = h1c.T @ h2c / denom
    k1 = sym_inv_sqrt(s11)
    k2 = sym_inv_sqrt(s22)
    t = k1 @ s12 @ k2
    u, s, vt = svd(t)
    ul = u[:, :top]
    vl = vt[:top].T
    sl = s[:top]
    corr = float(sl.sum())

    d12 = k1 @ ul @ vl.T @ k2
    d11 = -0.5 * k1 @ (ul * sl) @ ul.T @ k1
    d22 = -0.5 * k2 @ (vl * sl) @ vl.T @ k2
    g1 = (2.0 * h1c @ d11 + h2c @ d12.T) / denom
    g2 = (2.0 * h2c @ d22 + h1c @ d12) / denom
    return corr, g1, g2


class DccaeModel:
    """Two autoencoders plus (after fit_projections) the CCA directions."""

    def __init__(self, enc_x: Mlp, dec_x: Mlp, enc_y: Mlp, dec_y: Mlp,
                 lam: float = 1.0, ridge: float = 1e-4, proj_dim: int = 128,
                 recon: str = "squared"):
        if recon not in ("squared", "abs"):
            raise InvalidInput(f"unknown reconstruction mode {recon!r}")
        self.enc_x, self.dec_x = enc_x, dec_x
        self.enc_y, self.dec_y = enc_y, dec_y
        self.lam = lam
        self.ridge = ridge
        self.proj_dim = proj_dim
        self.recon = recon
        self.u: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.mean_f: np.ndarray | None = None
        self.mean_g: np.ndarray | None = None

    @classmethod
    def create(cls, dim_x: int, dim_y: int, rng: SeededRng, hidden: int = 256,
               proj_dim: int = 128, lam: float = 1.0, ridge: float = 1e-4,
               recon: str = "squared", encoder_activation: str = "tanh"):
        """Three-layer autoencoders: input -> hidden (encoder) -> input, so
        the encoder output is the middle layer."""
        enc_x = Mlp([dim_x, hidden], out_activation=encoder_activation, rng=rng)
        dec_x = Mlp([hidden, dim_x], out_activation="identity", rng=rng)
        enc_y = Mlp([dim_y, hidden], out_activation=encoder_activation, rng=rng)
        dec_y = Mlp([hidden, dim_y], out_activation="identity", rng=rng)
        return cls(enc_x, dec_x, enc_y, dec_y, lam=lam, ridge=ridge,
                   proj_dim=proj_dim, recon=recon)

    def params(self) -> list[np.ndarray]:
        return (self.enc_x.params() + self.dec_x.params()
                + self.enc_y.params() + self.dec_y.params())


def _recon_term(residual: np.ndarray, mode: str):
    """Total reconstruction penalty and its gradient wrt the reconstruction."""
    if mode == "squared":
        return float((residual ** 2).sum()), 2.0 * residual
    norms = np.sqrt((residual ** 2).sum(axis=1) + _ABS_SMOOTH ** 2)
    return float(norms.sum()), residual / norms[:, None]


def dccae_loss(model: DccaeModel, x: np.ndarray, y: np.ndarray):
    """Joint objective: -(top-L whitened correlation of encodings)
    + (lambda/M) * total reconstruction penalty. Returns (loss, grads) with
    grads ordered like model.params()."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    m = x.shape[0]
    hx, acts_ex = model.enc_x.forward(x)
    hy, acts_ey = model.enc_y.forward(y)
    corr, g_hx, g_hy = cca_corr(hx, hy, model.proj_dim, model.ridge)
    loss = -corr
    d_hx = -g_hx
    d_hy = -g_hy
    if model.lam != 0.0:
        coef = model.lam / m
        xr, acts_dx = model.dec_x.forward(hx)
        yr, acts_dy = model.dec_y.forward(hy)
        term_x, d_xr = _recon_term(xr - x, model.recon)
        term_y, d_yr = _recon_term(yr - y, model.recon)
        loss += coef * (term_x + term_y)
        back_x, grads_dx = model.dec_x.backward(acts_dx, coef * d_xr)
        back_y, grads_dy = model.dec_y.backward(acts_dy, coef * d_yr)
        d_hx = d_hx + back_x
        d_hy = d_hy + back_y
    else:
        grads_dx = model.dec_x.zero_grads()
        grads_dy = model.dec_y.zero_grads()
    _, grads_ex = model.enc_x.backward(acts_ex, d_hx)
    _, grads_ey = model.enc_y.backward(acts_ey, d_hy)
    return loss, grads_ex + grads_dx + grads_ey + grads_dy


def _pool(sequences: list[ViewSequence]):
    ordered = sorted(sequences, key=lambda s: s.video_id)
    x = np.concatenate([s.textual for s in ordered], axis=0)
    y = np.concatenate([s.visual for s in ordered], axis=0)
    return x, y


def train(model: DccaeModel, sequences: list[ViewSequence], epochs: int,
          rng: SeededRng, batch: int = 400, lr: float = 1e-3,
          betas: tuple[float, float] = (0.9, 0.999)):
    """Minibatch Adam over the flattened pool of (textual, visual) row pairs.

    The pool treats every (video, cluster) pair as one sample. Batches
    smaller than requested shrink with a warning but must stay above the
    projection dimension. Returns (model, epoch_mean_loss_trace).
    """
    import logging
    x_all, y_all = _pool(sequences)
    total = x_all.shape[0]
    if batch > total:
        logging.getLogger(__name__).warning(
            "dccae: batch %d larger than pool %d; shrinking", batch, total)
        batch = total
    if batch <= model.proj_dim:
        raise BatchTooSmall(
            f"batch {batch} must exceed projection dim {model.proj_dim}")
    params = model.params()
    opt = Adam(params, lr=lr, beta1=betas[0], beta2=betas[1])
    trace = []
    for _ in range(epochs):
        perm = rng.permutation(total)
        epoch_loss = 0.0
        used = 0
        for start in range(0, total, batch):
            idx = perm[start:start + batch]
            if len(idx) <= model.proj_dim:
                continue  # leftover slice too small for the correlation term
            loss, grads = dccae_loss(model, x_all[idx], y_all[idx])
            opt.step(grads)
            epoch_loss += loss * len(idx)
            used += len(idx)
        trace.append(epoch_loss / max(used, 1))
    return model, trace


def fit_projections(model: DccaeModel, sequences: list[ViewSequence]):
    """Closed-form linear CCA on the encoded full dataset; stores projection
    matrices and encoding means on the model and returns (U, V)."""
    x_all, y_all = _pool(sequences)
    m = x_all.shape[0]
    if m <= model.proj_dim:
        raise BatchTooSmall(
            f"dataset size {m} must exceed projection dim {model.proj_dim}")
    hx, _ = model.enc_x.forward(x_all)
    hy, _ = model.enc_y.forward(y_all)
    mean_f = hx.mean(axis=0)
    mean_g = hy.mean(axis=0)
    hxc = hx - mean_f
    hyc = hy - mean_g
    denom = m - 1
    s11 = hxc.T @ hxc / denom + model.ridge * np.eye(hx.shape[1])
    s22 = hyc.T @ hyc / denom + model.ridge * np.eye(hy.shape[1])
    s12 = hxc.T @ hyc / denom
    k1 = sym_inv_sqrt(s11)
    k2 = sym_inv_sqrt(s22)
    u, s, vt = svd(k1 @ s12 @ k2)
    model.u = k1 @ u[:, :model.proj_dim]
    model.v = k2 @ vt[:model.proj_dim].T
    model.mean_f = mean_f
    model.mean_g = mean_g
    return model.u, model.v


@dataclass
class FusedRepresentation:
    """Per-cluster projected rows of both views, K rows each."""

    video_id: str
    textual_out: np.ndarray    # (K, L)
    visual_out: np.ndarray     # (K, L)
    label: int | None = None


def transform(model: DccaeModel, sequence: ViewSequence) -> FusedRepresentation:
    if model.u is None or model.v is None:
        raise InvalidInput("projections not fitted; call fit_projections first")
    hx, _ = model.enc_x.forward(sequence.textual)
    hy, _ = model.enc_y.forward(sequence.visual)
    return FusedRepresentation(
        video_id=sequence.video_id,
        textual_out=(hx - model.mean_f) @ model.u,
        visual_out=(hy - model.mean_g) @ model.v,
        label=sequence.label)


def _write_mlp(f, mlp: Mlp) -> None:
    ser.write_u64(f, len(mlp.sizes))
    for s in mlp.sizes:
        ser.write_u64(f, s)
    ser.write_str(f, mlp.out_activation)
    for w, b in zip(mlp.weights, mlp.biases):
        ser.write_array(f, w)
        ser.write_array(f, b)


def _read_mlp(f) -> Mlp:
    sizes = [ser.read_u64(f) for _ in range(ser.read_u64(f))]
    mlp = Mlp(sizes, out_activation=ser.read_str(f))
    for i in range(len(mlp.weights)):
        mlp.weights[i] = ser.read_array(f)
        mlp.biases[i] = ser.read_array(f)
    return mlp


def save_model(path, model: DccaeModel) -> None:
    """dccae_model.bin: magic, lambda/ridge/L/recon mode, the four nets,
    projections and encoding means when fitted."""
    with open(path, "wb") as f:
        ser.write_magic(f, MAGIC)
        ser.write_f64(f, model.lam)
        ser.write_f64(f, model.ridge)
        ser.write_u64(f, model.proj_dim)
        ser.write_str(f, model.recon)
        for mlp in (model.enc_x, model.dec_x, model.enc_y, model.dec_y):
            _write_mlp(f, mlp)
        fitted = model.u is not None
        ser.write_u64(f, 1 if fitted else 0)
        if fitted:
            ser.write_array(f, model.u)
            ser.write_array(f, model.v)
            ser.write_array(f, model.mean_f)
            ser.write_array(f, model.mean_g)


def load_model(path) -> DccaeModel:
    with open(path, "rb") as f:
        ser.expect_magic(f, MAGIC)
        lam = ser.read_f64(f)
        ridge = ser.read_f64(f)
        proj_dim = ser.read_u64(f)
        recon = ser.read_str(f)
        nets = [_read_mlp(f) for _ in range(4)]
        model = DccaeModel(*nets, lam=lam, ridge=ridge, proj_dim=proj_dim,
                           recon=recon)
        if ser.read_u64(f):
            model.u = ser.read_array(f)
            model.v = ser.read_array(f)
            model.mean_f = ser.read_array(f)
            model.mean_g = ser.read_array(f)
    return model
