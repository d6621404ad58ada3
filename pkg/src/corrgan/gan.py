"""Adversarial training on top of the pretrained autoencoder.

The generator maps [noise, condition] to the autoencoder's latent space;
the pretrained decoder turns latents into full-length continuous records;
the discriminator scores each record concatenated with its minibatch mean
(minibatch averaging). Discriminator updates ascend

    (1/m) sum_i log D(t_i, t_bar) + log(1 - D(t_z_i, t_bar_z))

and generator+decoder updates jointly ascend (1/m) sum_i log D(t_z_i, t_bar_z)
while the discriminator stays frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .corrnn import (
    CLAMP_HI,
    CLAMP_LO,
    CorrNnParams,
    decode,
    init_corrnn,
    pretrain,
)
from .nn import (
    AdamState,
    DivergenceError,
    Mlp,
    activation_grad,
    adam_step,
    init_mlp,
    make_rng,
    mlp_backward,
    mlp_forward,
    sgd_step,
)
from . import metrics as _metrics


@dataclass
class TrainCfg:
    """Hyperparameters for the full pretrain + adversarial pipeline.

    Defaults follow the reference setup: batch 100, 150 pretraining epochs,
    1000 adversarial epochs, one discriminator step per generator step.
    ablation_medgan=True pretrains a plain autoencoder instead (correlation
    term and the two cross-reconstruction terms disabled).
    """

    latent_dim: int
    z_dim: int = 16
    batch_size: int = 100
    epochs: int = 1000
    pretrain_epochs: int = 150
    d_steps: int = 1
    lr: float = 1e-3
    pretrain_lr: float = 1e-3
    lambda_corr: float = 1.0
    seed: int = 0
    ablation_medgan: bool = False
    g_hidden: int = 128
    d_hidden: int = 128
    optimizer: str = "adam"
    recon_loss: str = "bce"
    conditional: bool = True
    force_condition: bool = True
    eval_interval: int = 100
    eval_alpha: float = 0.5

    def validate(self) -> None:
        counts = {
            "latent_dim": self.latent_dim,
            "z_dim": self.z_dim,
            "batch_size": self.batch_size,
            "d_steps": self.d_steps,
            "g_hidden": self.g_hidden,
            "d_hidden": self.d_hidden,
            "eval_interval": self.eval_interval,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        for name, value in (("epochs", self.epochs), ("pretrain_epochs", self.pretrain_epochs)):
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        if self.lr <= 0 or self.pretrain_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.eval_alpha <= 1.0:
            raise ValueError("eval_alpha must lie in [0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.recon_loss not in ("bce", "squared"):
            raise ValueError(f"unknown reconstruction loss {self.recon_loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def init_generator(input_dim: int, latent_dim: int, hidden: int, rng) -> Mlp:
    """[z, y] -> hidden relu -> latent tanh (the encoder's output range)."""
    return init_mlp([input_dim, hidden, latent_dim], ["relu", "tanh"], rng)


def init_discriminator(record_dim: int, hidden: int, rng) -> Mlp:
    """[record, batch mean] -> hidden relu -> probability."""
    return init_mlp([2 * record_dim, hidden, 1], ["relu", "sigmoid"], rng)


def sample_noise(m: int, z_dim: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. standard-normal noise batch, (m, z_dim)."""
    if m < 1 or z_dim < 1:
        raise ValueError(f"noise batch dims must be >= 1, got m={m}, z_dim={z_dim}")
    return rng.standard_normal((m, z_dim))


def synthesize_batch(
    G: Mlp, dec: CorrNnParams, z: np.ndarray, y_batch: np.ndarray | None = None
) -> np.ndarray:
    """Decode G([z_i, y_i]) for every row: continuous records in (0, 1).

    y_batch=None runs the generator on noise alone (unconditioned setup).
    The rows are deliberately not binarized; the discriminator sees the
    decoder's probabilities so gradients can flow back through it.
    """
    z = np.asarray(z, dtype=np.float64)
    if y_batch is None:
        gin = z
    else:
        y_batch = np.asarray(y_batch, dtype=np.float64)
        if y_batch.shape[0] != z.shape[0]:
            raise ValueError("noise and condition batches disagree")
        gin = np.hstack([z, y_batch])
    if gin.shape[1] != G.in_dim:
        raise ValueError(
            f"generator expects input dim {G.in_dim}, got {gin.shape[1]}"
        )
    return decode(dec, mlp_forward(G, gin)[-1])


def discriminate(D: Mlp, t_row: np.ndarray, t_mean: np.ndarray) -> float:
    """Probability D assigns to one record paired with its batch mean."""
    t_row = np.asarray(t_row, dtype=np.float64)
    t_mean = np.asarray(t_mean, dtype=np.float64)
    if t_row.shape != t_mean.shape or t_row.ndim != 1:
        raise ValueError("record and batch mean must be equal-length vectors")
    out = mlp_forward(D, np.concatenate([t_row, t_mean])[None, :])[-1]
    return float(out[0, 0])


def _disc_forward(D: Mlp, rows: np.ndarray, mean: np.ndarray):
    inputs = np.hstack([rows, np.broadcast_to(mean, rows.shape)])
    cache = mlp_forward(D, inputs)
    return cache, cache[-1][:, 0]


def _log_grad(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log of clamped probabilities and d/dp, zero where the clamp is flat."""
    pc = np.clip(p, CLAMP_LO, CLAMP_HI)
    grad = 1.0 / pc
    grad[(p < CLAMP_LO) | (p > CLAMP_HI)] = 0.0
    return np.log(pc), grad


def discriminator_objective(D: Mlp, real_batch: np.ndarray, synth_batch: np.ndarray) -> float:
    """Mean log D on real rows plus mean log(1-D) on synthetic rows."""
    real_batch = np.asarray(real_batch, dtype=np.float64)
    synth_batch = np.asarray(synth_batch, dtype=np.float64)
    if real_batch.shape != synth_batch.shape:
        raise ValueError("real and synthetic batches must have equal shape")
    _, p_real = _disc_forward(D, real_batch, real_batch.mean(axis=0))
    _, p_synth = _disc_forward(D, synth_batch, synth_batch.mean(axis=0))
    log_r, _ = _log_grad(p_real)
    log_s, _ = _log_grad(1.0 - p_synth)
    return float((log_r + log_s).mean())


def discriminator_grads(
    D: Mlp, real_batch: np.ndarray, synth_batch: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Objective value and its exact gradient for every discriminator param."""
    real_batch = np.asarray(real_batch, dtype=np.float64)
    synth_batch = np.asarray(synth_batch, dtype=np.float64)
    if real_batch.shape != synth_batch.shape:
        raise ValueError("real and synthetic batches must have equal shape")
    if real_batch.shape[0] < 2:
        raise ValueError("need batches of at least 2 records")
    m = real_batch.shape[0]

    cache_r, p_real = _disc_forward(D, real_batch, real_batch.mean(axis=0))
    cache_s, p_synth = _disc_forward(D, synth_batch, synth_batch.mean(axis=0))
    log_r, dlog_r = _log_grad(p_real)
    log_s, dlog_s = _log_grad(1.0 - p_synth)
    obj = float((log_r + log_s).mean())

    grads_r, _ = mlp_backward(D, cache_r, (dlog_r / m)[:, None])
    grads_s, _ = mlp_backward(D, cache_s, (-dlog_s / m)[:, None])
    return obj, [a + b for a, b in zip(grads_r, grads_s)]


def discriminator_step(
    D: Mlp,
    real_batch: np.ndarray,
    synth_batch: np.ndarray,
    state: AdamState,
    lr: float,
    optimizer: str = "adam",
) -> float:
    """One ascent step on the discriminator objective. Returns the objective."""
    obj, grads = discriminator_grads(D, real_batch, synth_batch)
    if not np.isfinite(obj):
        raise DivergenceError("discriminator objective diverged")
    if optimizer == "adam":
        adam_step(D.parameters(), grads, state, lr, maximize=True)
    else:
        sgd_step(D.parameters(), grads, lr, maximize=True)
    return obj


def _synth_forward(G: Mlp, dec: CorrNnParams, z, y_batch, force_condition):
    """Forward pass of the G -> decoder chain keeping every cache."""
    z = np.asarray(z, dtype=np.float64)
    if y_batch is None:
        gin = z
    else:
        y_batch = np.asarray(y_batch, dtype=np.float64)
        gin = np.hstack([z, y_batch])
    g_cache = mlp_forward(G, gin)
    latents = g_cache[-1]
    Wsum = dec.W_dec + dec.V_dec
    decoded = decode(dec, latents)
    synth = decoded
    if force_condition and y_batch is not None:
        synth = decoded.copy()
        synth[:, dec.x_dim :] = y_batch
    return g_cache, latents, Wsum, decoded, synth


def generator_objective(
    G: Mlp,
    dec: CorrNnParams,
    D: Mlp,
    z: np.ndarray,
    y_batch: np.ndarray | None,
    force_condition: bool = False,
) -> float:
    """(1/m) sum_i log D(t_z_i, t_bar_z) for a fixed noise batch."""
    _, _, _, _, synth = _synth_forward(G, dec, z, y_batch, force_condition)
    _, p = _disc_forward(D, synth, synth.mean(axis=0))
    log_p, _ = _log_grad(p)
    return float(log_p.mean())


def generator_grads(
    G: Mlp,
    dec: CorrNnParams,
    D: Mlp,
    z: np.ndarray,
    y_batch: np.ndarray | None,
    force_condition: bool = False,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Objective and exact gradients for G and for the decoder block.

    The gradient is taken through the full chain D(dec(G(.)), mean) with
    the discriminator frozen, including each sample's contribution to the
    synthetic batch mean. Returned lists align with G.parameters() and
    dec.decoder_parameters().
    """
    g_cache, latents, Wsum, decoded, synth = _synth_forward(
        G, dec, z, y_batch, force_condition
    )
    m, t_dim = synth.shape
    if m < 2:
        raise ValueError("need batches of at least 2 records")
    d_cache, p = _disc_forward(D, synth, synth.mean(axis=0))
    log_p, dlog_p = _log_grad(p)
    obj = float(log_p.mean())

    _, d_input_grad = mlp_backward(D, d_cache, (dlog_p / m)[:, None])
    direct = d_input_grad[:, :t_dim]
    via_mean = d_input_grad[:, t_dim:]
    # every row contributes 1/m of itself to the batch mean
    d_synth = direct + via_mean.sum(axis=0, keepdims=True) / m
    if force_condition and y_batch is not None:
        d_synth = d_synth.copy()
        d_synth[:, dec.x_dim :] = 0.0  # those coordinates were overwritten

    delta_dec = d_synth * activation_grad(dec.g, decoded)
    gWd = delta_dec.T @ latents
    gbd = delta_dec.sum(axis=0)
    d_latents = delta_dec @ Wsum
    g_grads, _ = mlp_backward(G, g_cache, d_latents)
    return obj, g_grads, [gWd, gWd.copy(), gbd]


def generator_step(
    G: Mlp,
    dec: CorrNnParams,
    D: Mlp,
    y_batch: np.ndarray | None,
    state: AdamState,
    lr: float,
    rng: np.random.Generator,
    m: int | None = None,
    z_dim: int | None = None,
    optimizer: str = "adam",
    force_condition: bool = False,
) -> float:
    """One joint ascent step on generator and decoder; D stays frozen."""
    if y_batch is not None:
        y_batch = np.asarray(y_batch, dtype=np.float64)
        m = y_batch.shape[0]
        z_dim = G.in_dim - y_batch.shape[1]
    elif m is None or z_dim is None:
        raise ValueError("unconditioned step needs explicit m and z_dim")
    z = sample_noise(m, z_dim, rng)
    obj, g_grads, dec_grads = generator_grads(
        G, dec, D, z, y_batch, force_condition=force_condition
    )
    if not np.isfinite(obj):
        raise DivergenceError("generator objective diverged")
    params = G.parameters() + dec.decoder_parameters()
    grads = g_grads + dec_grads
    if optimizer == "adam":
        adam_step(params, grads, state, lr, maximize=True)
    else:
        sgd_step(params, grads, lr, maximize=True)
    return obj


@dataclass
class TrainResult:
    generator: Mlp
    discriminator: Mlp
    corrnn: CorrNnParams
    reports: list
    pretrain_history: list[float] = field(default_factory=list)
    d_objectives: list[float] = field(default_factory=list)
    g_objectives: list[float] = field(default_factory=list)


def _evaluate_checkpoint(G, corrnn, X, Y, cfg: TrainCfg, rng, epoch: int):
    """Metrics of a parameter snapshot: generate one record per training row
    and compare the data halves (marginals and co-occurrence)."""
    n = X.shape[0]
    z = sample_noise(n, cfg.z_dim, rng)
    y_cond = Y if cfg.conditional else None
    synth = synthesize_batch(G, corrnn, z, y_cond)
    synth_x = synth[:, : X.shape[1]]
    p_train = _metrics.occurrence_probabilities(X)
    p_gen = _metrics.occurrence_probabilities((synth_x >= 0.5).astype(np.float64))
    mse = _metrics.occurrence_mse(p_train, p_gen)
    cooc_train = _metrics.cooccurrence_matrix(X, cfg.eval_alpha)
    cooc_gen = _metrics.cooccurrence_matrix(synth_x, cfg.eval_alpha)
    signed, absolute = _metrics.cooccurrence_error(cooc_train, cooc_gen)
    return _metrics.EvalReport(
        epoch=epoch,
        occurrence_mse=mse,
        cooc_err_signed=signed,
        cooc_err_abs=absolute,
        p_train=p_train,
        p_gen=p_gen,
        samples=synth[: min(100, n)].copy(),
    )


def train_corrgan(
    cfg: TrainCfg,
    dataset,
    pretrained: CorrNnParams | None = None,
    checkpoint_callback=None,
) -> TrainResult:
    """Full pipeline: pretrain the autoencoder, then adversarial epochs.

    dataset provides binary matrices X (data half) and Y (condition half).
    Per batch: cfg.d_steps discriminator updates (fresh noise each) then one
    joint generator/decoder update. Metrics are recorded every
    cfg.eval_interval epochs and at the final epoch; checkpoint_callback,
    when given, runs as callback(epoch, G, D, corrnn, reports) at the same
    points. The whole trajectory is a pure function of (cfg, dataset).
    """
    cfg.validate()
    X = np.asarray(dataset.X, dtype=np.float64)
    Y = np.asarray(dataset.Y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")

    rng = make_rng(cfg.seed)
    if pretrained is not None:
        corrnn = pretrained.copy()
        pre_history: list[float] = []
    else:
        corrnn = init_corrnn(X.shape[1], Y.shape[1], cfg.latent_dim, rng)
        pre_history = pretrain(
            corrnn,
            X,
            Y,
            epochs=cfg.pretrain_epochs,
            batch_size=cfg.batch_size,
            lr=cfg.pretrain_lr,
            rng=rng,
            lambda_corr=0.0 if cfg.ablation_medgan else cfg.lambda_corr,
            cross_reconstruction=not cfg.ablation_medgan,
            recon_loss=cfg.recon_loss,
            optimizer=cfg.optimizer,
        )

    g_input = cfg.z_dim + (Y.shape[1] if cfg.conditional else 0)
    G = init_generator(g_input, cfg.latent_dim, cfg.g_hidden, rng)
    D = init_discriminator(corrnn.t_dim, cfg.d_hidden, rng)
    d_state = AdamState.for_params(D.parameters())
    g_state = AdamState.for_params(G.parameters() + corrnn.decoder_parameters())

    T = np.hstack([X, Y])
    result = TrainResult(G, D, corrnn, reports=[], pretrain_history=pre_history)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            real = T[idx]
            y_cond = Y[idx] if cfg.conditional else None
            for _ in range(cfg.d_steps):
                z = sample_noise(idx.size, cfg.z_dim, rng)
                synth = synthesize_batch(G, corrnn, z, y_cond)
                if cfg.force_condition and y_cond is not None:
                    synth[:, corrnn.x_dim :] = y_cond
                d_obj = discriminator_step(
                    D, real, synth, d_state, cfg.lr, optimizer=cfg.optimizer
                )
                result.d_objectives.append(d_obj)
            g_obj = generator_step(
                G,
                corrnn,
                D,
                y_cond,
                g_state,
                cfg.lr,
                rng,
                m=idx.size,
                z_dim=cfg.z_dim,
                optimizer=cfg.optimizer,
                force_condition=cfg.force_condition,
            )
            result.g_objectives.append(g_obj)
        if epoch % cfg.eval_interval == 0 or epoch == cfg.epochs:
            result.reports.append(
                _evaluate_checkpoint(G, corrnn, X, Y, cfg, rng, epoch)
            )
            if checkpoint_callback is not None:
                checkpoint_callback(epoch, G, D, corrnn, result.reports)
    return result


@dataclass
class GenerationResult:
    """Raw decoder probabilities, their binarization, and the condition asked for."""

    raw: np.ndarray
    binary: np.ndarray
    condition: np.ndarray | None


def conditional_generate(
    G: Mlp,
    dec: CorrNnParams,
    condition: np.ndarray | None,
    n: int,
    rng: np.random.Generator,
    threshold: float = 0.5,
    overwrite_condition: bool = False,
) -> GenerationResult:
    """Draw n records for one fixed condition (None = unconditioned).

    Binarization is coordinate-wise: value >= threshold -> 1. The decoded
    condition half is kept as decoded unless overwrite_condition is set;
    the requested condition is returned alongside either way.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly between 0 and 1")
    if condition is not None:
        condition = np.asarray(condition, dtype=np.float64)
        expected = G.in_dim - (dec.t_dim - dec.x_dim)
        if condition.ndim != 1 or condition.size != dec.t_dim - dec.x_dim:
            raise ValueError(
                f"condition must be a vector of length {dec.t_dim - dec.x_dim}"
            )
        z_dim = expected
    else:
        z_dim = G.in_dim
    if n == 0:
        empty = np.zeros((0, dec.t_dim))
        return GenerationResult(empty, empty.copy(), condition)
    z = sample_noise(n, z_dim, rng)
    y_batch = None if condition is None else np.tile(condition, (n, 1))
    raw = synthesize_batch(G, dec, z, y_batch)
    if overwrite_condition and condition is not None:
        raw[:, dec.x_dim :] = condition
    binary = (raw >= threshold).astype(np.float64)
    return GenerationResult(raw, binary, condition)


def inpaint_halves(
    G_inpaint: Mlp,
    dec: CorrNnParams,
    image: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Complete an image whose top half is replaced with noise.

    The generator input is [noise, bottom half]; the decoder then emits a
    full-length continuous image. Returns (continuous, binarized).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 1 or image.size != G_inpaint.in_dim:
        raise ValueError(
            f"image must be a flat vector of length {G_inpaint.in_dim}"
        )
    half = image.size // 2
    z = rng.standard_normal(half)
    gin = np.concatenate([z, image[half:]])[None, :]
    completed = decode(dec, mlp_forward(G_inpaint, gin)[-1])[0]
    return completed, (completed >= 0.5).astype(np.float64)
