"""Affine projection probe between paired clean and noisy encodings.

The probe ``y(x) = A x + b`` is fitted to map clean rows onto their noisy
counterparts; its mean squared error over all ``N * D`` entries measures how
affinely similar the two representations are.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import fileio


class ProbeDivergence(FloatingPointError):
    def __init__(self, lr: float, epoch: int):
        super().__init__(f"probe training diverged at epoch {epoch} with learning rate {lr:g}; lower the rate")
        self.lr = lr
        self.epoch = epoch


@dataclass
class EncodingSet:
    data: np.ndarray
    label: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] == 0 or data.shape[0] == 0:
            raise ValueError(f"encodings must be a non-empty N x D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"encodings {self.label!r} contain non-finite values")
        self.data = data

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def rows(self, idx) -> "EncodingSet":
        return EncodingSet(self.data[idx], self.label)

    def save(self, path: str | os.PathLike) -> None:
        fileio.save(path, self.data)


def load_encodings(path: str | os.PathLike, label: str = "") -> EncodingSet:
    return EncodingSet(fileio.load(path, rank=2), label or os.path.basename(str(path)))


def _pair(clean: EncodingSet, noisy: EncodingSet) -> None:
    if clean.n != noisy.n:
        raise ValueError(f"paired sets differ in row count: {clean.n} vs {noisy.n}")
    if clean.d != noisy.d:
        raise ValueError(f"paired sets differ in dimension: {clean.d} vs {noisy.d}")


@dataclass
class ProbeModel:
    A: np.ndarray
    b: np.ndarray
    log: list[dict] = field(default_factory=list)
    use_bias: bool = True

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @classmethod
    def identity(cls, d: int, use_bias: bool = True) -> "ProbeModel":
        return cls(np.eye(d), np.zeros(d), use_bias=use_bias)

    @classmethod
    def zeros(cls, d: int, use_bias: bool = True) -> "ProbeModel":
        return cls(np.zeros((d, d)), np.zeros(d), use_bias=use_bias)

    def predict(self, x: np.ndarray) -> np.ndarray:
        y = x @ self.A.T
        return y + self.b if self.use_bias else y


def probe_loss(model: ProbeModel, clean: EncodingSet, noisy: EncodingSet) -> float:
    """``1/(N D) * sum_i ||A x_i + b - y_i||^2``."""
    _pair(clean, noisy)
    if model.A.shape != (clean.d, clean.d):
        raise ValueError(f"probe is {model.A.shape}, encodings have D = {clean.d}")
    r = model.predict(clean.data) - noisy.data
    return float(np.sum(r * r) / r.size)


def probe_grad(model: ProbeModel, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = model.predict(x) - y
    scale = 2.0 / r.size
    g_a = scale * (r.T @ x)
    g_b = scale * r.sum(axis=0) if model.use_bias else np.zeros_like(model.b)
    return g_a, g_b


def split_rows(clean: EncodingSet, noisy: EncodingSet, val_fraction: float = 0.1):
    """``((train_clean, train_noisy), (val_clean, val_noisy))``: the last ``val_fraction`` rows validate.

    ``val_fraction=0`` uses the full set for both.
    """
    _pair(clean, noisy)
    if not 0 <= val_fraction < 1:
        raise ValueError(f"validation fraction must be in [0, 1), got {val_fraction}")
    if val_fraction == 0:
        return (clean, noisy), (clean, noisy)
    n_val = max(1, int(round(val_fraction * clean.n)))
    if n_val >= clean.n:
        raise ValueError(f"validation fraction {val_fraction} leaves no training rows")
    cut = clean.n - n_val
    return ((clean.rows(slice(0, cut)), noisy.rows(slice(0, cut))),
            (clean.rows(slice(cut, None)), noisy.rows(slice(cut, None))))


def fit_probe(
    clean: EncodingSet,
    noisy: EncodingSet,
    val_fraction: float = 0.1,
    epochs: int = 3,
    lr: float = 1e-3,
    seed: int = 0,
    batch_size: int = 256,
    use_bias: bool = True,
    init: str = "identity",
    validation: tuple[EncodingSet, EncodingSet] | None = None,
) -> ProbeModel:
    """Mini-batch gradient descent on the probe loss.

    Validation rows are the last ``val_fraction`` of the data unless a
    separate ``validation`` pair is given; ``val_fraction=0`` validates on the
    full set. ``model.log`` holds one entry per epoch, epoch 0 being the
    initial model.
    """
    _pair(clean, noisy)
    if clean.n < 2:
        raise ValueError("fitting a probe needs at least two rows")
    if epochs < 0 or batch_size < 1 or not lr > 0:
        raise ValueError("epochs must be >= 0, batch_size >= 1 and lr > 0")
    if validation is not None:
        train_x, train_y = clean, noisy
        val_x, val_y = validation
        _pair(val_x, val_y)
    else:
        (train_x, train_y), (val_x, val_y) = split_rows(clean, noisy, val_fraction)

    if init == "identity":
        model = ProbeModel.identity(clean.d, use_bias)
    elif init == "zeros":
        model = ProbeModel.zeros(clean.d, use_bias)
    else:
        raise ValueError(f"init must be 'identity' or 'zeros', got {init!r}")

    rng = np.random.default_rng(seed)
    x, y = train_x.data, train_y.data

    def record(epoch):
        entry = {"epoch": epoch,
                 "train_loss": probe_loss(model, train_x, train_y),
                 "val_loss": probe_loss(model, val_x, val_y)}
        if not (math.isfinite(entry["train_loss"]) and math.isfinite(entry["val_loss"])):
            raise ProbeDivergence(lr, epoch)
        model.log.append(entry)

    record(0)
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, epochs + 1):
            order = rng.permutation(x.shape[0])
            for start in range(0, x.shape[0], batch_size):
                idx = order[start:start + batch_size]
                g_a, g_b = probe_grad(model, x[idx], y[idx])
                model.A -= lr * g_a
                if use_bias:
                    model.b -= lr * g_b
            record(epoch)
    return model


def closed_form_oracle(clean: EncodingSet, noisy: EncodingSet, ridge: float = 1e-6,
                       use_bias: bool = True) -> tuple[ProbeModel, float]:
    """Global optimum of the probe loss from the (ridge-regularised) normal equations.

    The ridge term penalises ``A`` only, never the offset.
    """
    _pair(clean, noisy)
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    x = clean.data
    z = np.hstack([x, np.ones((x.shape[0], 1))]) if use_bias else x
    gram = z.T @ z
    reg = np.eye(gram.shape[0]) * ridge
    if use_bias:
        reg[-1, -1] = 0.0
    lhs = gram + reg
    if ridge == 0 and np.linalg.matrix_rank(lhs) < lhs.shape[0]:
        raise np.linalg.LinAlgError("normal equations are singular; retry with ridge > 0")
    try:
        w = np.linalg.solve(lhs, z.T @ noisy.data)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("normal equations are singular; retry with ridge > 0") from None
    d = clean.d
    model = ProbeModel(w[:d].T.copy(), w[d].copy() if use_bias else np.zeros(d), use_bias=use_bias)
    return model, probe_loss(model, clean, noisy)


def gradcheck_probe(clean: EncodingSet, noisy: EncodingSet, model: ProbeModel, step: float = 1e-4) -> float:
    """Worst element-wise relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / (max(|a|, |n|) + 1e-8 * max(1, max|a|))``.
    """
    if clean.d > 16:
        raise ValueError("gradcheck is limited to D <= 16")
    g_a, g_b = probe_grad(model, clean.data, noisy.data)
    params = [(model.A, g_a)] + ([(model.b, g_b)] if model.use_bias else [])
    floor = 1e-8 * max(1.0, max(np.max(np.abs(g)) for _, g in params))
    worst = 0.0
    for p, g in params:
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = probe_loss(model, clean, noisy)
            flat[i] = orig - step
            down = probe_loss(model, clean, noisy)
            flat[i] = orig
            num = (up - down) / (2 * step)
            ana = g.reshape(-1)[i]
            worst = max(worst, abs(ana - num) / (max(abs(ana), abs(num)) + floor))
    return worst


CORRUPTIONS = ("affine", "noise", "mixed")


def gen_synthetic_pairs(n: int, d: int, seed: int = 0, corruption: str = "mixed", sigma: float = 0.1,
                        distortion: float = 0.3) -> tuple[EncodingSet, EncodingSet]:
    """Seeded stand-in for clean/noisy encodings.

    ``affine``: noisy = A* x + b*. ``noise``: noisy = x + sigma * e. ``mixed``: both.
    ``A* = I + distortion * G / sqrt(d)`` with Gaussian ``G``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if corruption not in CORRUPTIONS:
        raise ValueError(f"corruption must be one of {CORRUPTIONS}, got {corruption!r}")
    rng = np.random.default_rng(seed)
    clean = rng.standard_normal((n, d))
    a_star = np.eye(d) + distortion * rng.standard_normal((d, d)) / math.sqrt(d)
    b_star = 0.1 * rng.standard_normal(d)
    eps = rng.standard_normal((n, d))
    if corruption == "noise":
        noisy = clean + sigma * eps
    else:
        noisy = clean @ a_star.T + b_star
        if corruption == "mixed":
            noisy = noisy + sigma * eps
    # values at rest are float32; make the pair exactly representable
    clean = clean.astype(np.float32).astype(np.float64)
    noisy = noisy.astype(np.float32).astype(np.float64)
    return EncodingSet(clean, "clean"), EncodingSet(noisy, "noisy")


def gen_branch_triple(n: int, d: int, seed: int, sigma_a: float, sigma_b: float,
                      distortion: float = 0.3) -> tuple[EncodingSet, EncodingSet, EncodingSet]:
    """Reference encodings plus two independently corrupted variants (shared affine distortion)."""
    rng = np.random.default_rng(seed)
    clean = rng.standard_normal((n, d))
    a_star = np.eye(d) + distortion * rng.standard_normal((d, d)) / math.sqrt(d)
    base = clean @ a_star.T
    a = base + sigma_a * rng.standard_normal((n, d))
    b = base + sigma_b * rng.standard_normal((n, d))
    return EncodingSet(clean, "clean"), EncodingSet(a, "variant_a"), EncodingSet(b, "variant_b")


def compare_branches(clean: EncodingSet, variant_a: EncodingSet, variant_b: EncodingSet,
                     ridge: float = 1e-6) -> dict[str, float]:
    """Oracle probe loss from the reference encodings to each variant."""
    _, loss_a = closed_form_oracle(clean, variant_a, ridge)
    _, loss_b = closed_form_oracle(clean, variant_b, ridge)
    return {"a": loss_a, "b": loss_b}
