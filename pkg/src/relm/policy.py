"""Feed-forward policy network evaluated from a flat genome vector.

Genome layout, per layer in order: the weight matrix row-major with one row
per output unit, then the bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .latent import sigmoid

DEFAULT_HIDDEN = (45, 15, 6)
_P_MAX = np.nextafter(1.0, 0.0)
_P_MIN = np.finfo(float).tiny


class PolicyError(ValueError):
    pass


def _identity(x):
    return x


ACTIVATIONS = {"tanh": np.tanh, "sigmoid": sigmoid, "identity": _identity}


@dataclass(frozen=True)
class Topology:
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        if len(self.layer_sizes) != len(self.activations) + 1:
            raise PolicyError("need exactly one activation per non-input layer")
        if any(int(n) < 1 for n in self.layer_sizes):
            raise PolicyError("layer sizes must be >= 1")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise PolicyError(f"unknown activation {a!r}")
        if self.layer_sizes[-1] != 1 or self.activations[-1] != "sigmoid":
            raise PolicyError("the output layer must be a single sigmoid unit")

    @classmethod
    def default(cls, input_dim: int, hidden=DEFAULT_HIDDEN) -> "Topology":
        hidden = tuple(hidden)
        return cls((input_dim, *hidden, 1), ("tanh",) * len(hidden) + ("sigmoid",))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        return cls(tuple(d["layer_sizes"]), tuple(d["activations"]))


def param_count(t: Topology) -> int:
    s = t.layer_sizes
    return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


@dataclass(frozen=True)
class Block:
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def genome_slices(t: Topology) -> list[tuple[Block, Block]]:
    """(weight block, bias block) per layer; together they tile the genome."""
    out, off = [], 0
    for n_in, n_out in zip(t.layer_sizes[:-1], t.layer_sizes[1:]):
        w = Block(off, (n_out, n_in))
        off += n_out * n_in
        b = Block(off, (n_out,))
        off += n_out
        out.append((w, b))
    return out


def unflatten(genome: np.ndarray, t: Topology) -> list[tuple[np.ndarray, np.ndarray]]:
    genome = np.asarray(genome, dtype=float)
    if genome.shape != (param_count(t),):
        raise PolicyError(f"genome has shape {genome.shape}, topology needs ({param_count(t)},)")
    return [(genome[w.offset:w.offset + w.size].reshape(w.shape),
             genome[b.offset:b.offset + b.size]) for w, b in genome_slices(t)]


def flatten(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in layers])


def forward(genome: np.ndarray, t: Topology, s: np.ndarray) -> np.ndarray | float:
    """Output probability for one state vector, or one per row of a matrix."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    x = np.atleast_2d(s)
    if x.shape[1] != t.input_dim:
        raise PolicyError(f"state has {x.shape[1]} entries, topology expects {t.input_dim}")
    for (w, b), act in zip(unflatten(genome, t), t.activations):
        x = ACTIVATIONS[act](x @ w.T + b)
    p = np.clip(x[:, 0], _P_MIN, _P_MAX)
    return float(p[0]) if single else p


def predict(genome: np.ndarray, t: Topology, s: np.ndarray, threshold: float = 0.5):
    p = forward(genome, t, s)
    if isinstance(p, float):
        return int(p >= threshold)
    return (p >= threshold).astype(np.int64)
