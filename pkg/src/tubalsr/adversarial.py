"""Adversarial refinement of the sparse-coding generator.

The generator codes coarse patches with unrolled LISTA-T (tunable
per-iteration thresholds), maps the code through the frozen fine dictionary
and applies a learned square matrix to every AP slice of the fine patch.
A small fully-connected discriminator scores flattened fine patches. Both
are trained by momentum SGD with hand-derived gradients.

Losses, for real fine patches ``x`` and generated patches ``g``::

    disc:  -mean log D(x) - mean log(1 - D(g))
    gen:   content_weight * mean ||g - x||_F^2 - eta * mean log D(g)

Probabilities are clamped to ``[1e-7, 1 - 1e-7]`` before the logarithm.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dictionary import DictionaryPair
from .io import read_json, read_tns3, write_json, write_rows_csv, write_tns3
from .sparse import lista_backward, lista_forward, step_lipschitz
from .tensor import as_tensor3, tprod, ttranspose

log = logging.getLogger(__name__)

__all__ = [
    "TganConfig",
    "Discriminator",
    "GeneratorRefiner",
    "TrainingDiverged",
    "flatten_patches",
    "disc_forward",
    "disc_loss_grad",
    "gen_loss_grad",
    "disc_accuracy",
    "train_tgan",
    "write_history_csv",
    "save_models",
    "load_models",
]

PROB_CLAMP = 1e-7
LEAK = 0.2


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TganConfig:
    content_weight: float = 1.0
    eta: float = 1e-3
    lr: float = 1e-2
    disc_lr: float = 3e-3
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    hidden: tuple = (64, 32)
    lista_iters: int = 16
    disc_warmup: int = 60
    holdout_frac: float = 0.25

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if not (self.lr > 0 and self.disc_lr > 0):
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("need batch_size >= 1 and epochs >= 0")


def flatten_patches(samples):
    """``(n_f, B, n_ap)`` patch samples to a ``(B, n_f * n_ap)`` design matrix."""
    return np.ascontiguousarray(np.asarray(samples).transpose(1, 0, 2).reshape(samples.shape[1], -1))


def _lrelu(x):
    return np.where(x > 0, x, LEAK * x)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class Discriminator:
    """``in -> h1 -> h2 -> 1`` fully-connected net, leaky ReLU, logistic output."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float = 0.0

    PARAMS = ("W1", "b1", "W2", "b2", "w3", "b3")

    @classmethod
    def init(cls, n_in, hidden=(64, 32), seed=0):
        rng = np.random.default_rng(seed)
        h1, h2 = hidden
        return cls(
            W1=rng.standard_normal((h1, n_in)) * np.sqrt(2.0 / n_in),
            b1=np.zeros(h1),
            W2=rng.standard_normal((h2, h1)) * np.sqrt(2.0 / h1),
            b2=np.zeros(h2),
            w3=rng.standard_normal(h2) * np.sqrt(1.0 / h2),
            b3=0.0,
        )

    def params(self):
        return {k: getattr(self, k) for k in self.PARAMS}

    def logits(self, x):
        x = np.atleast_2d(x)
        if x.shape[1] != self.W1.shape[1]:
            raise ValueError(f"input has {x.shape[1]} features, discriminator expects {self.W1.shape[1]}")
        a1 = x @ self.W1.T + self.b1
        h1 = _lrelu(a1)
        a2 = h1 @ self.W2.T + self.b2
        h2 = _lrelu(a2)
        z = h2 @ self.w3 + self.b3
        return z, (x, a1, h1, a2, h2)

    def backward(self, cache, gz):
        """Parameter gradients and input gradient given ``dloss/dlogit`` per sample."""
        x, a1, h1, a2, h2 = cache
        grads = {"w3": h2.T @ gz, "b3": float(np.sum(gz))}
        gh2 = np.outer(gz, self.w3)
        ga2 = gh2 * np.where(a2 > 0, 1.0, LEAK)
        grads["W2"] = ga2.T @ h1
        grads["b2"] = ga2.sum(axis=0)
        gh1 = ga2 @ self.W2
        ga1 = gh1 * np.where(a1 > 0, 1.0, LEAK)
        grads["W1"] = ga1.T @ x
        grads["b1"] = ga1.sum(axis=0)
        return grads, ga1 @ self.W1


def disc_forward(disc, x):
    """Probability that each row of ``x`` (or each patch of a sample tensor) is real."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 3:
        x = flatten_patches(x)
    z, _ = disc.logits(x)
    return _sigmoid(z)


def _neglog_grad(z, positive):
    """``-log(clamp(p))`` (or ``-log(1 - clamp(p))``) and its derivative in the logit."""
    p = _sigmoid(z)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    if positive:
        return -np.log(pc), np.where(inside, -(1.0 - p), 0.0)
    return -np.log(1.0 - pc), np.where(inside, p, 0.0)


def disc_loss_grad(disc, real, fake):
    """Discriminator loss on flattened real/fake batches and its parameter gradients."""
    real, fake = np.atleast_2d(real), np.atleast_2d(fake)
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ValueError("empty batch")
    z_r, c_r = disc.logits(real)
    z_f, c_f = disc.logits(fake)
    l_r, g_r = _neglog_grad(z_r, True)
    l_f, g_f = _neglog_grad(z_f, False)
    loss = float(l_r.mean() + l_f.mean())
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite discriminator loss")
    grads_r, _ = disc.backward(c_r, g_r / len(z_r))
    grads_f, _ = disc.backward(c_f, g_f / len(z_f))
    return loss, {k: grads_r[k] + grads_f[k] for k in grads_r}


@dataclass
class GeneratorRefiner:
    """Tunable LISTA-T thresholds plus a fine-patch output map.

    ``W`` starts as the identity and multiplies every AP slice of the
    generated fine patch (equivalently every frequency slice, since it is
    real and shared). ``L`` is the step constant of the coarse dictionary.
    """

    pair: DictionaryPair
    thresholds: np.ndarray
    W: np.ndarray
    L: float

    @classmethod
    def identity(cls, pair, lam, iters=16):
        L = step_lipschitz(pair.coarse.atoms)
        n_f = pair.fine.atoms.shape[0]
        return cls(pair=pair, thresholds=np.full(iters, lam / L), W=np.eye(n_f), L=L)

    def forward(self, coarse):
        coarse = as_tensor3(coarse, "coarse patches")
        code, cache = lista_forward(self.pair.coarse.atoms, coarse, self.thresholds, self.L)
        fine = tprod(self.pair.fine.atoms, code)
        out = np.einsum("ij,jnk->ink", self.W, fine)
        cache["fine"] = fine
        return out, cache

    def __call__(self, coarse):
        return self.forward(coarse)[0]

    def backward(self, cache, grad_out):
        grads = {"W": np.einsum("ink,jnk->ij", grad_out, cache["fine"])}
        g_fine = np.einsum("ij,ink->jnk", self.W, grad_out)
        g_code = tprod(ttranspose(self.pair.fine.atoms), g_fine)
        grads["thresholds"] = lista_backward(cache, g_code)
        return grads


def gen_loss_grad(refiner, disc, coarse, fine, eta, content_weight=1.0):
    """Generator loss terms and gradients for the refiner's parameters.

    Returns ``(content_loss, adv_loss, grads)`` where the total loss is
    ``content_weight * content_loss + eta * adv_loss``.
    """
    fine = as_tensor3(fine, "fine patches")
    batch = fine.shape[1]
    if batch == 0:
        raise ValueError("empty batch")
    out, cache = refiner.forward(coarse)
    diff = out - fine
    content = float(np.sum(diff**2) / batch)
    grad_out = content_weight * 2.0 * diff / batch
    adv = 0.0
    if eta > 0:
        z, dcache = disc.logits(flatten_patches(out))
        l, gz = _neglog_grad(z, True)
        adv = float(l.mean())
        _, gx = disc.backward(dcache, eta * gz / batch)
        grad_out = grad_out + gx.reshape(batch, out.shape[0], out.shape[2]).transpose(1, 0, 2)
    return content, adv, refiner.backward(cache, grad_out)


def disc_accuracy(disc, real, fake):
    """Fraction of real patches scored > 0.5 and fake ones scored <= 0.5."""
    pr = disc_forward(disc, real)
    pf = disc_forward(disc, fake)
    return float((np.sum(pr > 0.5) + np.sum(pf <= 0.5)) / (len(pr) + len(pf)))


class _Momentum:
    """SGD with momentum; ``scale`` holds optional per-parameter step multipliers."""

    def __init__(self, lr, momentum, scale=None):
        self.lr, self.mu, self.v = lr, momentum, {}
        self.scale = scale or {}

    def step(self, obj, grads):
        for k, g in grads.items():
            v = self.mu * self.v.get(k, 0.0) - self.lr * self.scale.get(k, 1.0) * np.asarray(g)
            self.v[k] = v
            setattr(obj, k, getattr(obj, k) + v)


@dataclass
class TganResult:
    refiner: GeneratorRefiner
    disc: Discriminator
    history: list = field(default_factory=list)


def train_tgan(fine_samples, coarse_samples, pair, cfg=None, lam=0.05):
    """Alternate one discriminator and one generator step per mini-batch.

    ``fine_samples`` and ``coarse_samples`` are normalized co-located patch
    tensors (``n_f x N x n_ap`` and ``n_c x N x n_ap``); ``lam`` sets the
    initial LISTA-T thresholds ``lam / L``. A fraction ``holdout_frac`` of the
    patches is kept aside to measure discriminator accuracy. Before the
    adversarial epochs the discriminator alone is trained for
    ``disc_warmup`` epochs; ``history[0]`` records the state after warm-up.
    The dictionaries stay frozen.
    """
    cfg = cfg or TganConfig()
    fine = as_tensor3(fine_samples, "fine samples")
    coarse = as_tensor3(coarse_samples, "coarse samples")
    if fine.shape[1] != coarse.shape[1]:
        raise ValueError("fine and coarse sample counts differ")
    rng = np.random.default_rng(cfg.seed)
    n = fine.shape[1]
    perm = rng.permutation(n)
    n_hold = max(1, int(round(cfg.holdout_frac * n))) if n > 1 else 0
    hold, train = perm[:n_hold], perm[n_hold:]
    if len(train) == 0:
        raise ValueError("not enough patches after the hold-out split")

    refiner = GeneratorRefiner.identity(pair, lam, cfg.lista_iters)
    disc = Discriminator.init(fine.shape[0] * fine.shape[2], cfg.hidden, seed=cfg.seed)
    # thresholds live on the scale lam / L; stepping in units of their initial
    # value keeps them from being wiped out by the first update
    g_opt = _Momentum(cfg.lr, cfg.momentum, {"thresholds": refiner.thresholds**2})
    d_opt = _Momentum(cfg.disc_lr, cfg.momentum)
    real_hold = flatten_patches(fine[:, hold, :]) if n_hold else None

    def batches():
        order = train[rng.permutation(len(train))]
        for s in range(0, len(order), cfg.batch_size):
            yield order[s:s + cfg.batch_size]

    def snapshot(epoch, content, adv, dloss):
        acc = float("nan")
        if n_hold:
            acc = disc_accuracy(disc, real_hold, flatten_patches(refiner(coarse[:, hold, :])))
        return {"epoch": epoch, "content_loss": content, "adv_loss": adv, "disc_loss": dloss, "disc_accuracy": acc}

    def content_all():
        out = refiner(coarse[:, train, :])
        return float(np.sum((out - fine[:, train, :]) ** 2) / len(train))

    if cfg.epochs == 0:
        return TganResult(refiner, disc, [])

    dloss = float("nan")
    for _ in range(cfg.disc_warmup):
        for idx in batches():
            fake = flatten_patches(refiner(coarse[:, idx, :]))
            dloss, dg = disc_loss_grad(disc, flatten_patches(fine[:, idx, :]), fake)
            d_opt.step(disc, dg)
    initial = content_all()
    history = [snapshot(0, initial, float("nan"), dloss)]
    for epoch in range(1, cfg.epochs + 1):
        c_sum = a_sum = d_sum = 0.0
        nb = 0
        for idx in batches():
            fake = flatten_patches(refiner(coarse[:, idx, :]))
            dloss, dg = disc_loss_grad(disc, flatten_patches(fine[:, idx, :]), fake)
            d_opt.step(disc, dg)
            content, adv, gg = gen_loss_grad(refiner, disc, coarse[:, idx, :], fine[:, idx, :],
                                             cfg.eta, cfg.content_weight)
            g_opt.step(refiner, gg)
            refiner.thresholds = np.maximum(refiner.thresholds, 0.0)
            c_sum, a_sum, d_sum, nb = c_sum + content, a_sum + adv, d_sum + dloss, nb + 1
        history.append(snapshot(epoch, c_sum / nb, a_sum / nb, d_sum / nb))
        if not np.isfinite(c_sum) or c_sum / nb > 10.0 * max(initial, 1e-12):
            raise TrainingDiverged(
                f"content loss {c_sum / nb:.4g} at epoch {epoch} exceeds 10x its initial value {initial:.4g}; "
                "lower the learning rate"
            )
        log.debug("epoch %d: %s", epoch, history[-1])
    return TganResult(refiner, disc, history)


def write_history_csv(path, history):
    write_rows_csv(
        path,
        ["epoch", "content_loss", "adv_loss", "disc_accuracy"],
        [(h["epoch"], float(h["content_loss"]), float(h["adv_loss"]), float(h["disc_accuracy"])) for h in history],
    )


def _as_blob(a):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return a.reshape(a.shape[0], -1, 1)


def save_models(directory, result):
    """Write every parameter as a TNS3 blob plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blobs = {f"disc_{k}": v for k, v in result.disc.params().items()}
    blobs["gen_W"] = result.refiner.W
    blobs["gen_thresholds"] = result.refiner.thresholds
    manifest = {"L": result.refiner.L, "blobs": {}}
    for name, value in blobs.items():
        write_tns3(directory / f"{name}.tns3", _as_blob(value))
        manifest["blobs"][name] = list(np.shape(value))
    write_json(directory / "manifest.json", manifest)
    return manifest


def load_models(directory, pair):
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")

    def blob(name):
        return read_tns3(directory / f"{name}.tns3").reshape(manifest["blobs"][name])

    disc = Discriminator(**{k: blob(f"disc_{k}") for k in Discriminator.PARAMS})
    disc.b3 = float(disc.b3)
    refiner = GeneratorRefiner(pair=pair, thresholds=blob("gen_thresholds"), W=blob("gen_W"), L=manifest["L"])
    return refiner, disc
