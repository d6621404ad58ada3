"""Evaluation of generated batches against the training data.

Per-coordinate occurrence probabilities with their scatter MSE, the
thresholded co-occurrence matrix with its error means, a small softmax
classifier used as a label-diversity probe for generated images, and
plain-file exports (CSV, PGM, token lines) for external plotting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import AdamState, Mlp, adam_step, init_mlp, mlp_backward, mlp_forward


class GateError(RuntimeError):
    """The probe classifier is too weak to evaluate anything."""


@dataclass
class CooccurrenceMatrix:
    """Symmetric joint-occurrence rates above a threshold; zero diagonal."""

    matrix: np.ndarray
    alpha: float


@dataclass
class EvalReport:
    """Metrics of one parameter snapshot during training."""

    epoch: int
    occurrence_mse: float
    cooc_err_signed: float
    cooc_err_abs: float
    p_train: np.ndarray
    p_gen: np.ndarray
    label_histogram: np.ndarray | None = None
    samples: np.ndarray | None = None
    artifacts: list[str] = field(default_factory=list)


def occurrence_probabilities(data: np.ndarray) -> np.ndarray:
    """Fraction of rows with each coordinate active (column means)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("need a non-empty 2-D matrix")
    return data.mean(axis=0)


def occurrence_mse(p_a: np.ndarray, p_b: np.ndarray) -> float:
    """Mean squared distance of the occurrence scatter from the y=x line."""
    p_a = np.asarray(p_a, dtype=np.float64)
    p_b = np.asarray(p_b, dtype=np.float64)
    if p_a.shape != p_b.shape:
        raise ValueError(f"profile lengths disagree: {p_a.shape} vs {p_b.shape}")
    return float(np.mean((p_a - p_b) ** 2))


def cooccurrence_matrix(data: np.ndarray, alpha: float = 0.5) -> CooccurrenceMatrix:
    """Normalized count of rows where both coordinates exceed alpha.

    The comparison is strictly `>`, so alpha=1.0 annihilates binary data.
    Off-diagonal cells are counts/n; the diagonal stays zero.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("need a non-empty 2-D matrix")
    if data.shape[1] < 2:
        raise ValueError("need at least 2 coordinates")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    active = (data > alpha).astype(np.float64)
    counts = active.T @ active
    np.fill_diagonal(counts, 0.0)
    return CooccurrenceMatrix(counts / data.shape[0], alpha)


def cooccurrence_error(
    original: CooccurrenceMatrix, generated: CooccurrenceMatrix
) -> tuple[float, float]:
    """(signed mean, absolute mean) of generated minus original, over all cells.

    Both are reported because signed errors can cancel; the absolute mean is
    the headline trend number.
    """
    if original.matrix.shape != generated.matrix.shape:
        raise ValueError("co-occurrence matrices have different shapes")
    if original.alpha != generated.alpha:
        raise ValueError(
            f"alpha mismatch: {original.alpha} vs {generated.alpha}"
        )
    diff = generated.matrix - original.matrix
    return float(diff.mean()), float(np.abs(diff).mean())


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_softmax_classifier(
    images: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    hidden: int = 128,
    epochs: int = 12,
    batch_size: int = 100,
    lr: float = 1e-3,
) -> Mlp:
    """One-hidden-layer softmax classifier trained with cross-entropy."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    net = init_mlp([images.shape[1], hidden, n_classes], ["relu", "identity"], rng)
    state = AdamState.for_params(net.parameters())
    onehot = np.eye(n_classes)[labels]
    n = images.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            cache = mlp_forward(net, images[idx])
            probs = _softmax(cache[-1])
            grad_logits = (probs - onehot[idx]) / idx.size
            grads, _ = mlp_backward(net, cache, grad_logits)
            adam_step(net.parameters(), grads, state, lr)
    return net


def classifier_accuracy(net: Mlp, images: np.ndarray, labels: np.ndarray) -> float:
    preds = mlp_forward(net, images)[-1].argmax(axis=1)
    return float((preds == np.asarray(labels)).mean())


def classifier_diversity(
    train_images: np.ndarray,
    train_labels: np.ndarray,
    generated: np.ndarray,
    rng: np.random.Generator,
    gate: float = 0.85,
    holdout_fraction: float = 0.2,
) -> tuple[np.ndarray, float]:
    """Label histogram of generated images under a gated probe classifier.

    The classifier trains on a split of the real data and must reach the
    gate accuracy on the held-out split before it is allowed to label
    anything. Returns (per-class counts over generated, gate accuracy).
    """
    train_images = np.asarray(train_images, dtype=np.float64)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    n = train_images.shape[0]
    order = rng.permutation(n)
    n_hold = max(1, int(round(n * holdout_fraction)))
    hold, fit = order[:n_hold], order[n_hold:]
    net = train_softmax_classifier(train_images[fit], train_labels[fit], rng)
    acc = classifier_accuracy(net, train_images[hold], train_labels[hold])
    if acc < gate:
        raise GateError(
            f"probe classifier reached {acc:.3f} held-out accuracy, below the "
            f"{gate:.2f} gate"
        )
    n_classes = int(train_labels.max()) + 1
    generated = np.asarray(generated, dtype=np.float64)
    if generated.shape[0] == 0:
        return np.zeros(n_classes, dtype=np.int64), acc
    preds = mlp_forward(net, generated)[-1].argmax(axis=1)
    return np.bincount(preds, minlength=n_classes), acc


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5, 8-bit) from values in [0, 1], rounded half up."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("PGM export expects a 2-D image")
    level = np.floor(image * 255.0 + 0.5)
    level = np.clip(level, 0, 255).astype(np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(level.tobytes())


def image_grid(rows: np.ndarray, hw: tuple[int, int], columns: int = 10) -> np.ndarray:
    """Tile flat image rows into one grid image (missing tiles stay black)."""
    rows = np.asarray(rows, dtype=np.float64)
    h, w = hw
    if rows.ndim != 2 or rows.shape[1] != h * w:
        raise ValueError(f"rows must be flat {h}x{w} images")
    n = rows.shape[0]
    n_rows = (n + columns - 1) // columns
    grid = np.zeros((n_rows * h, columns * w))
    for k in range(n):
        r, c = divmod(k, columns)
        grid[r * h : (r + 1) * h, c * w : (c + 1) * w] = rows[k].reshape(h, w)
    return grid


def skill_lines(binary_rows: np.ndarray, tokens: list[str]) -> list[str]:
    """One text line per row: active tokens, comma-separated, dictionary order."""
    binary_rows = np.asarray(binary_rows)
    if binary_rows.shape[1] != len(tokens):
        raise ValueError(
            f"row width {binary_rows.shape[1]} != dictionary size {len(tokens)}"
        )
    return [
        ", ".join(tokens[k] for k in np.flatnonzero(row)) for row in binary_rows
    ]


def export_report(
    reports: list[EvalReport],
    out_dir,
    tokens: list[str] | None = None,
    image_hw: tuple[int, int] | None = None,
) -> list[Path]:
    """Write metrics.csv, a per-checkpoint scatter CSV, and sample dumps.

    Token names label the scatter rows when given; checkpoints carrying
    sample rows additionally get a text dump (with tokens) or a PGM grid
    (with image_hw). Returns the paths written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "occurrence_mse", "cooc_err_signed", "cooc_err_abs"])
        for rep in reports:
            writer.writerow(
                [rep.epoch, repr(rep.occurrence_mse), repr(rep.cooc_err_signed), repr(rep.cooc_err_abs)]
            )
    written.append(metrics_path)

    for rep in reports:
        scatter_path = out_dir / f"scatter_epoch{rep.epoch}.csv"
        with open(scatter_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dim_index", "token", "p_train", "p_gen"])
            for k, (a, b) in enumerate(zip(rep.p_train, rep.p_gen)):
                name = tokens[k] if tokens and k < len(tokens) else f"x{k}"
                writer.writerow([k, name, repr(float(a)), repr(float(b))])
        written.append(scatter_path)
        rep.artifacts.append(str(scatter_path))

        if rep.samples is None:
            continue
        if image_hw is not None:
            pgm_path = out_dir / f"samples_epoch{rep.epoch}.pgm"
            write_pgm(pgm_path, image_grid(rep.samples, image_hw))
            written.append(pgm_path)
            rep.artifacts.append(str(pgm_path))
        elif tokens is not None:
            txt_path = out_dir / f"samples_epoch{rep.epoch}.txt"
            binary = (rep.samples[:, : len(tokens)] >= 0.5).astype(int)
            txt_path.write_text(
                "\n".join(skill_lines(binary, tokens)) + "\n", encoding="utf-8"
            )
            written.append(txt_path)
            rep.artifacts.append(str(txt_path))
    return written
