"""Latent state encoders: PCA for continuous features, a CD-1 RBM for discrete ones."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ingest import Dataset, FeatureSchema, StandardizationStats, DataError


class EncoderError(ValueError):
    pass


def sigmoid(x):
    """Logistic function, evaluated without overflow for either sign."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --------------------------------------------------------------------------
# PCA

@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray                # (input_dim,)
    components: np.ndarray          # (latent_dim, input_dim), orthonormal rows
    explained_variance: np.ndarray  # (latent_dim,), non-increasing

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.components.shape[0]


def fit_pca(x: np.ndarray, latent_dim: int) -> PcaModel:
    """Top ``latent_dim`` eigenvectors of the sample covariance of ``x``.

    Each component is signed so that its largest-magnitude entry is positive.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EncoderError("PCA needs a matrix with at least 2 rows")
    if not 1 <= latent_dim <= x.shape[1]:
        raise EncoderError(f"latent_dim {latent_dim} outside [1, {x.shape[1]}]")
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:latent_dim]
    comps = evecs[:, order].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PcaModel(mean, comps, np.clip(evals[order], 0.0, None))


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project a vector (or the rows of a matrix) onto the components."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise EncoderError(f"PCA expects {model.input_dim} inputs, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    return np.asarray(z) @ model.components + model.mean


# --------------------------------------------------------------------------
# one-hot

def one_hot_encode(values, schema: FeatureSchema) -> np.ndarray:
    """Concatenated one-hot blocks for the discrete part of a record.

    ``values`` maps (or is a sequence aligned with) the schema's discrete
    columns.
    """
    cols = schema.discrete
    if isinstance(values, dict):
        values = [values[c.name] for c in cols]
    if len(values) != len(cols):
        raise EncoderError(f"expected {len(cols)} discrete values, got {len(values)}")
    out = np.zeros(sum(len(c.categories) for c in cols))
    offset = 0
    for c, v in zip(cols, values):
        try:
            k = c.categories.index(v)
        except ValueError:
            raise EncoderError(f"column {c.name!r}: unseen category {v!r}") from None
        out[offset + k] = 1.0
        offset += len(c.categories)
    return out


def one_hot_matrix(data: Dataset) -> np.ndarray:
    blocks = []
    for c in data.schema.discrete:
        lookup = {cat: k for k, cat in enumerate(c.categories)}
        idx = np.empty(len(data), dtype=int)
        for i, v in enumerate(data.columns[c.name]):
            if v not in lookup:
                raise EncoderError(f"column {c.name!r}: unseen category {v!r}")
            idx[i] = lookup[v]
        block = np.zeros((len(data), len(c.categories)))
        block[np.arange(len(data)), idx] = 1.0
        blocks.append(block)
    if not blocks:
        return np.zeros((len(data), 0))
    return np.hstack(blocks)


# --------------------------------------------------------------------------
# RBM

@dataclass(eq=False)
class RbmModel:
    weights: np.ndarray       # (visible_dim, hidden_dim)
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        v, h = self.weights.shape
        if self.visible_bias.shape != (v,) or self.hidden_bias.shape != (h,):
            raise EncoderError("RBM parameter shapes are inconsistent")

    @property
    def visible_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, visible_dim: int, hidden_dim: int) -> "RbmModel":
        return cls(np.zeros((visible_dim, hidden_dim)), np.zeros(visible_dim), np.zeros(hidden_dim))

    def copy(self) -> "RbmModel":
        return RbmModel(self.weights.copy(), self.visible_bias.copy(), self.hidden_bias.copy())


def rbm_hidden(model: RbmModel, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.visible_dim:
        raise EncoderError(f"RBM expects {model.visible_dim} visible units, got {v.shape[-1]}")
    return sigmoid(model.hidden_bias + v @ model.weights)


def rbm_visible(model: RbmModel, h: np.ndarray) -> np.ndarray:
    return sigmoid(model.visible_bias + np.asarray(h) @ model.weights.T)


def reconstruction_error(model: RbmModel, v: np.ndarray) -> float:
    """Mean squared error of the mean-field up-down reconstruction."""
    recon = rbm_visible(model, rbm_hidden(model, v))
    return float(np.mean((np.asarray(v) - recon) ** 2))


def cd1_step(model: RbmModel, v0: np.ndarray, learning_rate: float,
             rng: np.random.Generator) -> RbmModel:
    """One contrastive-divergence update on a mini-batch, in place."""
    ph0 = rbm_hidden(model, v0)
    h0 = (rng.random(ph0.shape) < ph0).astype(float)
    pv1 = rbm_visible(model, h0)
    ph1 = rbm_hidden(model, pv1)
    n = v0.shape[0]
    model.weights += learning_rate * (v0.T @ ph0 - pv1.T @ ph1) / n
    model.visible_bias += learning_rate * (v0 - pv1).mean(axis=0)
    model.hidden_bias += learning_rate * (ph0 - ph1).mean(axis=0)
    return model


def fit_rbm(v: np.ndarray, hidden_dim: int, epochs: int, learning_rate: float,
            seed: int, batch_size: int = 16, history: list | None = None) -> RbmModel:
    """Train an RBM by CD-1 over shuffled mini-batches.

    Weights start at N(0, 0.01^2), biases at zero. When ``history`` is a
    list, the reconstruction error before training and after every epoch is
    appended to it.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or not np.isin(v, (0.0, 1.0)).all():
        raise EncoderError("RBM input must be a 0/1 matrix")
    if hidden_dim < 1 or epochs < 1:
        raise EncoderError("hidden_dim and epochs must be at least 1")
    if not learning_rate > 0:
        raise EncoderError(f"learning rate must be positive, got {learning_rate}")
    rng = np.random.default_rng(seed)
    model = RbmModel(rng.normal(0.0, 0.01, (v.shape[1], hidden_dim)),
                     np.zeros(v.shape[1]), np.zeros(hidden_dim))
    if history is not None:
        history.append(reconstruction_error(model, v))
    for _ in range(epochs):
        perm = rng.permutation(len(v))
        for start in range(0, len(v), batch_size):
            cd1_step(model, v[perm[start:start + batch_size]], learning_rate, rng)
        if history is not None:
            history.append(reconstruction_error(model, v))
    return model


# --------------------------------------------------------------------------
# state encoding

def default_latent_dim(input_dim: int) -> int:
    return min(input_dim, math.ceil(input_dim / 2))


@dataclass(eq=False)
class Encoders:
    """Everything needed to turn a raw record into a state vector."""

    schema: FeatureSchema
    stats: StandardizationStats
    pca: PcaModel | None = None
    rbm: RbmModel | None = None
    mute: bool = False

    @property
    def n_continuous(self) -> int:
        return len(self.schema.continuous)

    @property
    def n_onehot(self) -> int:
        return sum(len(c.categories) for c in self.schema.discrete)

    @property
    def state_dim(self) -> int:
        if self.mute:
            return self.n_continuous + self.n_onehot
        cont = self.pca.latent_dim if self.n_continuous else 0
        disc = self.rbm.hidden_dim if self.n_onehot else 0
        return cont + disc

    def check(self) -> None:
        if self.mute:
            return
        if self.n_continuous and self.pca is None:
            raise EncoderError("continuous columns present but no PCA encoder")
        if self.n_onehot and self.rbm is None:
            raise EncoderError("discrete columns present but no RBM encoder")
        if self.pca is not None and self.pca.input_dim != self.n_continuous:
            raise EncoderError("PCA input size does not match continuous columns")
        if self.rbm is not None and self.rbm.visible_dim != self.n_onehot:
            raise EncoderError("RBM visible size does not match one-hot width")

    def raw_features(self, data: Dataset) -> np.ndarray:
        """Standardized continuous block followed by the one-hot block."""
        if data.schema != self.schema:
            raise DataError("dataset schema does not match the model schema")
        cont = (data.continuous_matrix() - self.stats.mean) / self.stats.std
        return np.hstack([cont, one_hot_matrix(data)])

    def encode_raw(self, raw: np.ndarray) -> np.ndarray:
        self.check()
        raw = np.atleast_2d(raw)
        if raw.shape[1] != self.n_continuous + self.n_onehot:
            raise EncoderError("raw feature width does not match the schema")
        if self.mute:
            return raw.copy()
        cont, disc = raw[:, :self.n_continuous], raw[:, self.n_continuous:]
        parts = []
        if self.n_continuous:
            parts.append(pca_project(self.pca, cont))
        if self.n_onehot:
            parts.append(rbm_hidden(self.rbm, disc))
        return np.hstack(parts) if parts else np.zeros((len(raw), 0))

    def encode(self, data: Dataset) -> np.ndarray:
        return self.encode_raw(self.raw_features(data))

    def refit(self, raw: np.ndarray, latent_dim: int | None, rbm_hidden_dim: int | None,
              rbm_epochs: int, rbm_lr: float, seed: int) -> None:
        """Fit PCA/RBM on a raw feature matrix (see ``raw_features``)."""
        if self.mute:
            return
        nc = self.n_continuous
        if nc:
            self.pca = fit_pca(raw[:, :nc], latent_dim or default_latent_dim(nc))
        if self.n_onehot:
            self.rbm = fit_rbm(raw[:, nc:], rbm_hidden_dim or math.ceil(self.n_onehot / 2),
                               rbm_epochs, rbm_lr, seed)


def encode_state(record: dict, encoders: Encoders) -> np.ndarray:
    """Encode a single record (column name -> value) into a state vector."""
    schema = encoders.schema
    for name in schema.names:
        if name not in record:
            raise DataError(f"record is missing column {name!r}")
    cont = np.array([float(record[n]) for n in schema.continuous])
    cont = (cont - encoders.stats.mean) / encoders.stats.std
    onehot = one_hot_encode(record, schema)
    return encoders.encode_raw(np.concatenate([cont, onehot]))[0]
