"""Fingerprint localization: weighted KNN and a small softmax cell classifier."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import read_json, read_tns3, write_json, write_rows_csv, write_tns3
from .radiomap import RSS_FLOOR, RadioMap

__all__ = [
    "Fingerprint",
    "LocationEstimate",
    "wknn_locate",
    "ClassifierConfig",
    "Classifier",
    "classifier_loss_grad",
    "train_classifier",
    "classify",
    "loc_error",
    "error_cdf",
    "noisy_queries",
    "write_cdf_csv",
    "save_classifier",
    "load_classifier",
]

WKNN_EPS = 1e-6


@dataclass
class Fingerprint:
    """RSS readings in dBm, one per AP; missing readings become the -110 floor."""

    rss: np.ndarray

    def __post_init__(self):
        rss = np.array(self.rss, dtype=float).ravel()
        rss[np.isnan(rss)] = RSS_FLOOR
        if np.any(~np.isfinite(rss)) or rss.min(initial=0.0) < RSS_FLOOR - 1e-9 or rss.max(initial=RSS_FLOOR) > 1e-9:
            raise ValueError(f"fingerprint values must lie in [{RSS_FLOOR}, 0] dBm")
        self.rss = rss

    @classmethod
    def from_readings(cls, readings, n_aps):
        """Build from a ``{ap_index: dBm}`` mapping; absent APs get the floor."""
        rss = np.full(n_aps, RSS_FLOOR)
        for ap, v in readings.items():
            if not 0 <= int(ap) < n_aps:
                raise ValueError(f"AP index {ap} out of range")
            rss[int(ap)] = v
        return cls(rss)


@dataclass(frozen=True)
class LocationEstimate:
    x: float
    y: float
    cell: int
    confidence: float


def _rss(fp):
    return fp.rss if isinstance(fp, Fingerprint) else np.asarray(fp, dtype=float).ravel()


def _database(maps):
    maps = [maps] if isinstance(maps, RadioMap) else list(maps)
    if any(mm.n_aps != maps[0].n_aps for mm in maps):
        raise ValueError("maps must share the AP set")
    return np.vstack([mm.fingerprints() for mm in maps]), np.vstack([mm.centers() for mm in maps])


def wknn_locate(fp, m, k=3):
    """Inverse-distance-weighted centroid of the ``k`` nearest RPs in RSS space.

    ``m`` is a radio map or a list of maps pooled into one database (cells
    are numbered map by map). Weights are ``1 / (d + 1e-6)``. An exact match
    (``d == 0``) returns that RP. ``confidence`` is the weight share of the
    nearest RP.
    """
    rss = _rss(fp)
    fps, centers = _database(m)
    n = fps.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if rss.shape[0] != fps.shape[1]:
        raise ValueError(f"fingerprint has {rss.shape[0]} APs, map has {fps.shape[1]}")
    d = np.sqrt(np.sum((fps - rss) ** 2, axis=1))
    order = np.argsort(d, kind="stable")[:k]
    if d[order[0]] == 0.0:
        x, y = centers[order[0]]
        return LocationEstimate(float(x), float(y), int(order[0]), 1.0)
    w = 1.0 / (d[order] + WKNN_EPS)
    w /= w.sum()
    x, y = w @ centers[order]
    return LocationEstimate(float(x), float(y), int(order[0]), float(w[0]))


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 128
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 32
    noise_db: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid classifier config")
        if not self.lr > 0 or self.noise_db < 0:
            raise ValueError("need lr > 0 and noise_db >= 0")


@dataclass
class Classifier:
    """``n_ap -> hidden (ReLU) -> cells`` softmax network over standardized RSS.

    ``centers`` holds the coordinates of every class (a grid cell of one of
    the training maps); ``mu``/``sigma`` standardize inputs per AP.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    centers: np.ndarray

    PARAMS = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, n_in, centers, mu, sigma, hidden=128, seed=0):
        rng = np.random.default_rng(seed)
        n_out = len(centers)
        return cls(
            W1=rng.standard_normal((hidden, n_in)) * np.sqrt(2.0 / n_in),
            b1=np.zeros(hidden),
            W2=rng.standard_normal((n_out, hidden)) * 1e-3,
            b2=np.zeros(n_out),
            mu=np.asarray(mu, dtype=float),
            sigma=np.asarray(sigma, dtype=float),
            centers=np.asarray(centers, dtype=float),
        )

    @property
    def n_classes(self):
        return self.W2.shape[0]

    def _forward(self, rss):
        x = (np.atleast_2d(rss) - self.mu) / self.sigma
        a1 = x @ self.W1.T + self.b1
        h = np.maximum(a1, 0.0)
        return h @ self.W2.T + self.b2, (x, a1, h)

    def logits(self, rss):
        return self._forward(rss)[0]

    def proba(self, rss):
        return _softmax(self.logits(rss))

    def nbytes(self):
        return int(sum(getattr(self, k).nbytes for k in self.PARAMS))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def classifier_loss_grad(clf, rss, labels):
    """Mean cross-entropy over a batch and its parameter gradients."""
    labels = np.asarray(labels)
    z, (x, a1, h) = clf._forward(rss)
    p = _softmax(z)
    n = len(labels)
    loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), labels], 1e-300))))
    gz = p.copy()
    gz[np.arange(n), labels] -= 1.0
    gz /= n
    ga1 = (gz @ clf.W2) * (a1 > 0)
    grads = {"W2": gz.T @ h, "b2": gz.sum(axis=0), "W1": ga1.T @ x, "b1": ga1.sum(axis=0)}
    return loss, grads


def train_classifier(m, aug=None, cfg=None):
    """Train a cell classifier on the fingerprints of ``m`` (and ``aug``).

    Every RP of every training map is one class located at its cell center.
    Each epoch sees every fingerprint once with fresh Gaussian noise of
    ``cfg.noise_db`` dB, mimicking noisy operating-phase queries.
    """
    cfg = cfg or ClassifierConfig()
    x, centers = _database([m] + ([aug] if aug is not None else []))
    n = len(x)
    if n < 2:
        raise ValueError("need at least two training cells")
    if np.ptp(x, axis=0).max() == 0.0:
        raise ValueError("all training fingerprints are identical")
    labels = np.arange(n)
    rng = np.random.default_rng(cfg.seed)
    sigma = x.std(axis=0)
    sigma[sigma == 0] = 1.0
    clf = Classifier.init(x.shape[1], centers, x.mean(axis=0), sigma, cfg.hidden, seed=cfg.seed)
    vel = {k: 0.0 for k in Classifier.PARAMS}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb = x[idx] + cfg.noise_db * rng.standard_normal((len(idx), x.shape[1]))
            _, g = classifier_loss_grad(clf, xb, labels[idx])
            for k in Classifier.PARAMS:
                vel[k] = cfg.momentum * vel[k] - cfg.lr * g[k]
                setattr(clf, k, getattr(clf, k) + vel[k])
    return clf


def classify(clf, fp):
    """Argmax cell, its center and its softmax confidence."""
    p = clf.proba(_rss(fp))[0]
    c = int(np.argmax(p))
    x, y = clf.centers[c]
    return LocationEstimate(float(x), float(y), c, float(p[c]))


def loc_error(est, truth):
    """Euclidean distance between an estimate (or ``(x, y)``) and the true point."""
    ex, ey = (est.x, est.y) if isinstance(est, LocationEstimate) else est
    tx, ty = (truth.x, truth.y) if isinstance(truth, LocationEstimate) else truth
    return float(np.hypot(ex - tx, ey - ty))


def error_cdf(errors):
    """``[(error, fraction <= error), ...]`` at each distinct error value."""
    e = np.sort(np.asarray(errors, dtype=float))
    if len(e) == 0:
        return []
    vals, counts = np.unique(e, return_counts=True)
    frac = np.cumsum(counts) / len(e)
    frac[-1] = 1.0
    return [(float(v), float(f)) for v, f in zip(vals, frac)]


def noisy_queries(m, noise_db=2.0, draws=1, seed=0):
    """Noisy fingerprints at every RP: ``(queries, true_xy)``, clipped to the RSS range."""
    rng = np.random.default_rng(seed)
    fps, centers = m.fingerprints(), m.centers()
    q = np.vstack([fps + noise_db * rng.standard_normal(fps.shape) for _ in range(draws)])
    return np.clip(q, RSS_FLOOR, 0.0), np.vstack([centers] * draws)


def write_cdf_csv(path, cdf):
    write_rows_csv(path, ["error_m", "fraction"], cdf)


def save_classifier(directory, clf):
    """TNS3 blob per array plus ``manifest.json`` with shapes and parameter byte size."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"blobs": {}, "param_bytes": clf.nbytes(), "n_classes": clf.n_classes}
    for k in Classifier.PARAMS + ("mu", "sigma", "centers"):
        a = np.atleast_1d(getattr(clf, k))
        write_tns3(directory / f"{k}.tns3", a.reshape(a.shape[0], -1, 1))
        manifest["blobs"][k] = list(a.shape)
    write_json(directory / "manifest.json", manifest)
    return manifest


def load_classifier(directory):
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    arrays = {k: read_tns3(directory / f"{k}.tns3").reshape(shape) for k, shape in manifest["blobs"].items()}
    return Classifier(**arrays)
