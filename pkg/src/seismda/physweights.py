"""Source-domain weights from physical similarity to the target building.

A source whose property value ``u_s`` is close to the target's ``u_t`` gets
a small distance ``(1 - u_s/u_t)**2 + eps``; weights are the softmax of the
reciprocal distances.  Per-property weight vectors can be averaged.
"""
from __future__ import annotations

import logging
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DimensionError

log = logging.getLogger(__name__)

DEFAULT_EPS = 0.05
SKEW_THRESHOLD = 0.9

PROPERTY_NAMES = ("N", "Omega_s", "mu_T", "T1", "H")

# Steel moment-frame archetypes: stories, static overstrength, ductility,
# first-mode period [s], height [m].
STEEL_ARCHETYPES = {
    "2-story": {"N": 2, "Omega_s": 2.98, "mu_T": 4.10, "T1": 0.88, "H": 8.6},
    "4-story": {"N": 4, "Omega_s": 1.75, "mu_T": 4.60, "T1": 1.51, "H": 16.6},
    "8-story": {"N": 8, "Omega_s": 2.63, "mu_T": 3.30, "T1": 2.00, "H": 32.6},
    "12-story": {"N": 12, "Omega_s": 2.09, "mu_T": 2.70, "T1": 2.70, "H": 48.6},
    "20-story": {"N": 20, "Omega_s": 1.89, "mu_T": 2.61, "T1": 3.44, "H": 80.6},
}


@dataclass
class WeightVector:
    weights: np.ndarray
    eps: float = DEFAULT_EPS
    properties: tuple = ()
    sources: tuple = ()
    distances: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)

    def __len__(self):
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)

    @property
    def skewed(self) -> bool:
        return bool(self.weights.max() > SKEW_THRESHOLD)

    def to_dict(self) -> dict:
        out = {"weights": self.weights.tolist(), "eps": self.eps,
               "properties": list(self.properties), "sources": list(self.sources),
               "skewed": self.skewed}
        if self.distances is not None:
            out["distances"] = np.asarray(self.distances).tolist()
        return out


def _exact(x) -> Fraction:
    # shortest decimal repr, so 16.6 means 166/10 rather than its binary neighbour
    return x if isinstance(x, Fraction) else Fraction(repr(float(x)))


def property_distance(u_s, u_t, eps=DEFAULT_EPS) -> float:
    """``(1 - u_s/u_t)**2 + eps``.

    The squared gap is evaluated in rational arithmetic and rounded once, so
    mirror-image sources such as 16.6 and 80.6 around 48.6 tie exactly.
    """
    if u_t == 0:
        raise ArgumentError("target property value must be non-zero")
    if eps <= 0:
        raise ArgumentError(f"smoothing factor must be positive, got {eps}")
    gap = (1 - _exact(u_s) / _exact(u_t)) ** 2
    return float(gap) + eps


def _softmax_inverse(distances) -> np.ndarray:
    inv = 1.0 / np.asarray(distances, dtype=np.float64)
    e = np.exp(inv - inv.max())
    return e / e.sum()


def _warn_if_skewed(wv: WeightVector):
    if wv.skewed:
        log.warning("physics weights are highly unbalanced (max %.3f > %.2f): %s",
                    wv.weights.max(), SKEW_THRESHOLD, np.round(wv.weights, 4).tolist())


def weights_single_property(sources, target, eps=DEFAULT_EPS, *, prop="", names=()) -> WeightVector:
    sources = list(sources)
    if not sources:
        raise ArgumentError("need at least one source domain")
    d = np.array([property_distance(u, target, eps) for u in sources])
    wv = WeightVector(_softmax_inverse(d), eps, (prop,) if prop else (), tuple(names), d)
    _warn_if_skewed(wv)
    return wv


def weights_combined(vectors) -> WeightVector:
    """Elementwise mean of several weight vectors, renormalised."""
    vectors = list(vectors)
    if not vectors:
        raise ArgumentError("nothing to combine")
    sizes = {len(v) for v in vectors}
    if len(sizes) != 1:
        raise DimensionError(f"weight vectors have different lengths {sorted(sizes)}")
    mean = np.mean([np.asarray(v.weights if isinstance(v, WeightVector) else v) for v in vectors],
                   axis=0)
    props = tuple(p for v in vectors if isinstance(v, WeightVector) for p in v.properties)
    first = vectors[0]
    wv = WeightVector(mean / mean.sum(), getattr(first, "eps", DEFAULT_EPS), props,
                      getattr(first, "sources", ()))
    _warn_if_skewed(wv)
    return wv


def uniform_weights(n) -> WeightVector:
    if n < 1:
        raise ArgumentError("need at least one source domain")
    return WeightVector(np.full(n, 1.0 / n), properties=("uniform",))


def inverse_divergence_weights(divergences) -> list:
    """``w_i = (1/d_i) / sum_j (1/d_j)``; keeps the input number type."""
    inv = [1 / d for d in divergences]
    total = sum(inv)
    return [v / total for v in inv]


def physics_weights(table, target, sources, props=("H",), eps=DEFAULT_EPS) -> WeightVector:
    """Weights for ``sources`` relative to ``target`` from a property table.

    ``table`` maps building id -> {property name -> value}.  With several
    properties the per-property vectors are averaged.
    """
    if target in sources:
        raise ArgumentError(f"target {target!r} also listed as a source")
    missing = [b for b in (target, *sources) if b not in table]
    if missing:
        raise ArgumentError(f"no physical properties for {missing}")
    per = [weights_single_property([table[s][p] for s in sources], table[target][p], eps,
                                   prop=p, names=sources) for p in props]
    return per[0] if len(per) == 1 else weights_combined(per)


def bound_value(risks, divergences, weights):
    """``sum_i w_i (R_i + d_i)`` with constant terms dropped.

    Plain arithmetic so exact number types (``Fraction``) pass through.
    """
    w = weights.weights.tolist() if isinstance(weights, WeightVector) else list(weights)
    risks, divergences = list(risks), list(divergences)
    if not len(risks) == len(divergences) == len(w):
        raise DimensionError("risks, divergences and weights must have equal lengths")
    if any(d <= 0 for d in divergences):
        raise ArgumentError("divergences must be positive")
    return sum(wi * (r + d) for wi, r, d in zip(w, risks, divergences))


def weight_report(table, target, sources, props=("H",), eps=DEFAULT_EPS) -> dict:
    per = {p: physics_weights(table, target, sources, (p,), eps).to_dict() for p in props}
    combined = physics_weights(table, target, sources, props, eps)
    return {"target": target, "sources": list(sources), "eps": eps,
            "per_property": per, "combined": combined.to_dict()}


def is_probability_vector(w, tol=1e-12) -> bool:
    w = np.asarray(w)
    return bool(np.all(w > 0) and math.isclose(float(w.sum()), 1.0, abs_tol=tol))
