"""Declarative trapping potentials built from power-law wells.

Two composition forms over a list of wells (center, exponent, weight):

* ``product``: V(x) = W(x) * prod_j |x - x_j|^(p_j).  With equal weights
  W is the constant weight; with unequal weights W(x) smoothly interpolates
  the per-well weights (inverse-square-distance partition of unity), so
  each stated weight acts as that well's own multiplicative factor.  Every
  center is a zero of V.
* ``sum``: V(x) = sum_j g_j |x - x_j|^(p_j).  Zeros exist only where all
  terms vanish, i.e. at a center shared by every well.

Near a zero x_j the potential behaves like c_j |x - x_j|^(p_j); the pair
(p_j, c_j) is the local homogeneous model used by the concentration
predictions, and ``local_model`` returns it in closed form.
"""

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid2D


class NotCommonZero(Exception):
    """Requested point is not a zero of both potentials."""


@dataclass(frozen=True)
class Well:
    center: tuple
    p: float
    g: float = 1.0

    def __post_init__(self):
        if self.p <= 0 or self.g <= 0:
            raise ValueError("well exponent and weight must be positive")


@dataclass(frozen=True)
class PotentialSpec:
    wells: tuple
    form: str = "product"

    def __post_init__(self):
        if self.form not in ("product", "sum"):
            raise ValueError(f"unknown potential form {self.form!r}")
        if not self.wells:
            raise ValueError("potential needs at least one well")

    @staticmethod
    def of(form, *wells):
        return PotentialSpec(tuple(Well(tuple(c), float(p), float(g))
                                   for (c, p, g) in wells), form)

    @staticmethod
    def single_well(p=2.0, g=1.0, center=(0.0, 0.0)):
        return PotentialSpec.of("sum", (center, p, g))

    def key(self):
        return (self.form, self.wells)

    def zeros(self):
        """Points where V vanishes, with co-located wells merged."""
        if self.form == "product":
            seen = []
            for w in self.wells:
                if w.center not in seen:
                    seen.append(w.center)
            return seen
        c0 = self.wells[0].center
        return [c0] if all(w.center == c0 for w in self.wells) else []

    def local_model(self, zero):
        """Homogeneous behavior (exponent p, coefficient c) of V at a zero.

        V(zero + x) = c |x|^p (1 + o(1)); for product form the coefficient
        collects the well's own weight times the other factors at the zero.
        """
        zero = tuple(zero)
        if zero not in self.zeros():
            raise NotCommonZero(f"{zero} is not a zero of this potential")
        if self.form == "sum":
            p = min(w.p for w in self.wells)
            c = sum(w.g for w in self.wells if w.p == p)
            return p, c
        p = sum(w.p for w in self.wells if w.center == zero)
        c = 1.0
        for w in self.wells:
            if w.center == zero:
                c *= w.g
            else:
                d = math.hypot(zero[0] - w.center[0], zero[1] - w.center[1])
                c *= w.g * d**w.p
        return p, c

    def __call__(self, X, Y):
        """Evaluate V at coordinate arrays."""
        if self.form == "sum":
            out = np.zeros_like(X, dtype=float)
            for w in self.wells:
                out += w.g * np.hypot(X - w.center[0], Y - w.center[1]) ** w.p
            return out
        out = np.ones_like(X, dtype=float)
        for w in self.wells:
            out *= np.hypot(X - w.center[0], Y - w.center[1]) ** w.p
        gs = [w.g for w in self.wells]
        if all(g == gs[0] for g in gs):
            return gs[0] * out
        # unequal weights: blend log-weights with an inverse-square partition
        # of unity so that V ~ g_j * (other factors) * |x - x_j|^(p_j) at x_j
        eta = []
        for w in self.wells:
            d2 = (X - w.center[0]) ** 2 + (Y - w.center[1]) ** 2
            eta.append(1.0 / np.maximum(d2, 1e-300))
        tot = sum(eta)
        logw = np.zeros_like(X, dtype=float)
        for w, e in zip(self.wells, eta):
            logw += math.log(w.g) * (e / tot)
        return out * np.exp(logw)


_POTENTIAL_CACHE = {}


def eval_potential(spec, grid):
    """Nodewise potential field on a grid, cached per (spec, grid)."""
    key = (spec.key(), grid.key())
    hit = _POTENTIAL_CACHE.get(key)
    if hit is None:
        hit = spec(grid.X, grid.Y)
        _POTENTIAL_CACHE[key] = hit
    return hit


def common_zeros(spec1, spec2):
    """Zeros shared by both potentials (exact center matching)."""
    z1 = spec1.zeros()
    z2 = set(spec2.zeros())
    return [z for z in z1 if z in z2]


def spec_to_dict(spec):
    return {"form": spec.form,
            "wells": [{"center": list(w.center), "p": w.p, "g": w.g}
                      for w in spec.wells]}


def spec_from_dict(d):
    return PotentialSpec.of(d["form"],
                            *[(tuple(w["center"]), w["p"], w.get("g", 1.0))
                              for w in d["wells"]])
