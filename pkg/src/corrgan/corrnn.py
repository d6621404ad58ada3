"""Correlational autoencoder over split binary records.

A record t = [x, y] is encoded to a continuous latent through one shared
hidden layer, f(Wx + Vy + b), and decoded back to the full record length
through g(W'h + V'h + b'). Training minimizes the reconstruction error of
the full record and of the two half-masked variants while maximizing the
per-dimension correlation between the hidden codes of the two halves.
The trained decoder is what lets an adversarial generator work in a
continuous space while the data stays discrete.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    AdamState,
    DivergenceError,
    activate,
    activation_grad,
    adam_step,
    glorot_uniform,
    sgd_step,
)

# Probabilities are clamped into this interval before any logarithm.
CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7

CORR_EPS = 1e-8


@dataclass
class BinaryRecord:
    """One sample split into its data half x and condition half y."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 1 or self.y.ndim != 1:
            raise ValueError("record halves must be vectors")
        if self.x.size < 1 or self.y.size < 1:
            raise ValueError("both halves must be non-empty")
        for half in (self.x, self.y):
            if not np.all((half == 0.0) | (half == 1.0)):
                raise ValueError("record entries must be 0 or 1")

    @property
    def t(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


@dataclass
class CorrNnParams:
    """Encoder weights (W, V, b) and decoder weights (W', V', b').

    W is (h, |x|), V is (h, |y|); both decoder matrices are (|t|, h) and
    act additively on the same latent, so the decoder always emits a
    full-length record.
    """

    W: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W_dec: np.ndarray
    V_dec: np.ndarray
    b_dec: np.ndarray
    f: str = "tanh"
    g: str = "sigmoid"

    @property
    def x_dim(self) -> int:
        return self.W.shape[1]

    @property
    def y_dim(self) -> int:
        return self.V.shape[1]

    @property
    def t_dim(self) -> int:
        return self.W_dec.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.W, self.V, self.b, self.W_dec, self.V_dec, self.b_dec]

    def decoder_parameters(self) -> list[np.ndarray]:
        """The block updated jointly with the generator during GAN training."""
        return [self.W_dec, self.V_dec, self.b_dec]

    def copy(self) -> "CorrNnParams":
        return CorrNnParams(
            self.W.copy(),
            self.V.copy(),
            self.b.copy(),
            self.W_dec.copy(),
            self.V_dec.copy(),
            self.b_dec.copy(),
            self.f,
            self.g,
        )


def init_corrnn(
    x_dim: int,
    y_dim: int,
    hidden_dim: int,
    rng: np.random.Generator,
    f: str = "tanh",
    g: str = "sigmoid",
) -> CorrNnParams:
    if min(x_dim, y_dim, hidden_dim) < 1:
        raise ValueError("all dimensions must be >= 1")
    t_dim = x_dim + y_dim
    return CorrNnParams(
        W=glorot_uniform(hidden_dim, x_dim, rng),
        V=glorot_uniform(hidden_dim, y_dim, rng),
        b=np.zeros(hidden_dim),
        W_dec=glorot_uniform(t_dim, hidden_dim, rng),
        V_dec=glorot_uniform(t_dim, hidden_dim, rng),
        b_dec=np.zeros(t_dim),
        f=f,
        g=g,
    )


def _as_batch(a: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise ValueError(f"{what} has shape {a.shape}, expected (*, {dim})")
    return a, single


def encode(p: CorrNnParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Hidden code f(Wx + Vy + b); accepts single vectors or batches.

    Masked variants are plain calls with an explicitly zeroed half.
    """
    X, single = _as_batch(x, p.x_dim, "x")
    Y, single_y = _as_batch(y, p.y_dim, "y")
    if single != single_y or X.shape[0] != Y.shape[0]:
        raise ValueError("x and y batches disagree")
    H = activate(p.f, X @ p.W.T + Y @ p.V.T + p.b)
    return H[0] if single else H


def decode(p: CorrNnParams, hidden: np.ndarray) -> np.ndarray:
    """Full-length reconstruction g(W'h + V'h + b'), entries in (0, 1)."""
    H, single = _as_batch(hidden, p.hidden_dim, "hidden")
    out = activate(p.g, H @ (p.W_dec + p.V_dec).T + p.b_dec)
    return out[0] if single else out


def reconstruct(p: CorrNnParams, record: BinaryRecord, mode: str = "full") -> np.ndarray:
    """Decode the record's hidden code; mode selects which half is visible."""
    if record.x.size != p.x_dim or record.y.size != p.y_dim:
        raise ValueError("record dims do not match the model")
    if mode == "full":
        h = encode(p, record.x, record.y)
    elif mode == "x_only":
        h = encode(p, record.x, np.zeros(p.y_dim))
    elif mode == "y_only":
        h = encode(p, np.zeros(p.x_dim), record.y)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return decode(p, h)


def hidden_correlation(Hx: np.ndarray, Hy: np.ndarray, eps: float = CORR_EPS) -> float:
    """Sum over hidden dimensions of the Pearson-style batch correlation.

    Each dimension contributes cov / sqrt(var_x * var_y + eps); constant
    columns therefore contribute ~0 instead of dividing by zero.
    """
    corr, _, _ = _hidden_correlation_grads(Hx, Hy, eps, want_grads=False)
    return corr


def _hidden_correlation_grads(
    Hx: np.ndarray, Hy: np.ndarray, eps: float = CORR_EPS, want_grads: bool = True
):
    Hx = np.asarray(Hx, dtype=np.float64)
    Hy = np.asarray(Hy, dtype=np.float64)
    if Hx.shape != Hy.shape:
        raise ValueError(f"hidden batches disagree: {Hx.shape} vs {Hy.shape}")
    if Hx.ndim != 2 or Hx.shape[0] < 2:
        raise ValueError("need at least 2 samples to correlate")
    Cx = Hx - Hx.mean(axis=0)
    Cy = Hy - Hy.mean(axis=0)
    num = (Cx * Cy).sum(axis=0)
    sxx = (Cx * Cx).sum(axis=0)
    syy = (Cy * Cy).sum(axis=0)
    prod = sxx * syy + eps
    den = np.sqrt(prod)
    corr = float((num / den).sum())
    if not want_grads:
        return corr, None, None
    # d corr_k / d Hx[i,k] = Cy[i,k]/den_k - corr_k * syy_k * Cx[i,k] / prod_k
    # (the mean terms drop out because the centered columns sum to zero).
    dHx = Cy / den - Cx * (num * syy / (den * prod))
    dHy = Cx / den - Cy * (num * sxx / (den * prod))
    return corr, dHx, dHy


def _recon_error_grad(T: np.ndarray, P: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    """Total reconstruction error over the batch and its gradient wrt P."""
    if kind == "bce":
        Pc = np.clip(P, CLAMP_LO, CLAMP_HI)
        loss = float(-(T * np.log(Pc) + (1.0 - T) * np.log1p(-Pc)).sum())
        grad = -(T / Pc - (1.0 - T) / (1.0 - Pc))
        grad[(P < CLAMP_LO) | (P > CLAMP_HI)] = 0.0  # flat outside the clamp
        return loss, grad
    if kind == "squared":
        diff = P - T
        return float((diff * diff).sum()), 2.0 * diff
    raise ValueError(f"unknown reconstruction loss {kind!r}")


def corrnn_loss_grads(
    p: CorrNnParams,
    X: np.ndarray,
    Y: np.ndarray,
    lambda_corr: float = 1.0,
    cross_reconstruction: bool = True,
    recon_loss: str = "bce",
) -> tuple[float, list[np.ndarray]]:
    """Batch loss and exact gradients for every parameter block.

    loss = (1/m) sum_i [L(t_i, t'_i) + L(t_i, x'_i) + L(t_i, y'_i)]
           - lambda_corr * corr(hidden of x-masked, hidden of y-masked)

    With cross_reconstruction=False the two masked terms are dropped
    (the plain-autoencoder ablation). Gradients align with p.parameters().
    """
    X, _ = _as_batch(X, p.x_dim, "X")
    Y, _ = _as_batch(Y, p.y_dim, "Y")
    m = X.shape[0]
    if Y.shape[0] != m:
        raise ValueError("X and Y batches disagree")
    if m < 2:
        raise ValueError("need a batch of at least 2 records")

    T = np.hstack([X, Y])
    Wsum = p.W_dec + p.V_dec

    need_masked = cross_reconstruction or lambda_corr != 0.0
    H_full = activate(p.f, X @ p.W.T + Y @ p.V.T + p.b)
    if need_masked:
        Hx = activate(p.f, X @ p.W.T + p.b)
        Hy = activate(p.f, Y @ p.V.T + p.b)

    gW = np.zeros_like(p.W)
    gV = np.zeros_like(p.V)
    gb = np.zeros_like(p.b)
    gWd = np.zeros_like(p.W_dec)
    gbd = np.zeros_like(p.b_dec)

    def recon_path(H, use_x, use_y):
        """One decode path: returns its total error and accumulates grads."""
        nonlocal gW, gV, gb, gWd, gbd
        P = activate(p.g, H @ Wsum.T + p.b_dec)
        err, dP = _recon_error_grad(T, P, recon_loss)
        delta = (dP / m) * activation_grad(p.g, P)
        gWd += delta.T @ H
        gbd += delta.sum(axis=0)
        dH = delta @ Wsum
        delta_h = dH * activation_grad(p.f, H)
        if use_x:
            gW += delta_h.T @ X
        if use_y:
            gV += delta_h.T @ Y
        gb += delta_h.sum(axis=0)
        return err

    total_err = recon_path(H_full, use_x=True, use_y=True)
    if cross_reconstruction:
        total_err += recon_path(Hx, use_x=True, use_y=False)
        total_err += recon_path(Hy, use_x=False, use_y=True)
    loss = total_err / m

    if lambda_corr != 0.0:
        corr, dHx_c, dHy_c = _hidden_correlation_grads(Hx, Hy)
        loss -= lambda_corr * corr
        delta_hx = (-lambda_corr * dHx_c) * activation_grad(p.f, Hx)
        gW += delta_hx.T @ X
        gb += delta_hx.sum(axis=0)
        delta_hy = (-lambda_corr * dHy_c) * activation_grad(p.f, Hy)
        gV += delta_hy.T @ Y
        gb += delta_hy.sum(axis=0)

    if not np.isfinite(loss):
        raise DivergenceError("non-finite autoencoder loss")
    # W' and V' enter the decode additively, so their gradients coincide.
    return loss, [gW, gV, gb, gWd, gWd.copy(), gbd]


def pretrain(
    p: CorrNnParams,
    X: np.ndarray,
    Y: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    lambda_corr: float = 1.0,
    cross_reconstruction: bool = True,
    recon_loss: str = "bce",
    optimizer: str = "adam",
) -> list[float]:
    """Minibatch sweeps minimizing the autoencoder loss, in place.

    Returns the per-epoch mean loss. Deterministic for a given rng state;
    epochs=0 leaves the parameters untouched and returns [].
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    state = AdamState.for_params(p.parameters())
    history: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            if idx.size < 2:
                continue  # a trailing singleton cannot be correlated
            loss, grads = corrnn_loss_grads(
                p,
                X[idx],
                Y[idx],
                lambda_corr=lambda_corr,
                cross_reconstruction=cross_reconstruction,
                recon_loss=recon_loss,
            )
            if optimizer == "adam":
                adam_step(p.parameters(), grads, state, lr)
            elif optimizer == "sgd":
                sgd_step(p.parameters(), grads, lr)
            else:
                raise ValueError(f"unknown optimizer {optimizer!r}")
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return history
