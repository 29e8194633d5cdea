"""Birkhoff averages from Lebesgue-random starts and Markov codings.

The codings are static data: the baker map is coded by the side of x = p;
the golden toral map [[1,1],[1,0]] by the two squares of a Pythagorean
tiling whose sides lie along its eigendirections; its square, the cat map,
by pairs of consecutive golden symbols.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as krng
from .errors import CodingMismatchError, ValidationError
from .shift import SFT, CylinderPotential, cylinder_masses, rpf_solve
from .systems import GOLDEN, PHI, BakerMap, SmoothSystem


@dataclass
class Observable:
    name: str
    eval: object  # callable (N, 2) -> (N,)
    reference_integral: float | None = None
    provenance: str | None = None
    sup_abs: float = 1.0

    def __call__(self, X):
        return np.asarray(self.eval(np.asarray(X, float)), float)


def cos_observable(axis: int = 0) -> Observable:
    return Observable(f"cos{axis + 1}", lambda X: np.cos(2 * np.pi * X[..., axis]), 0.0,
                      "closed form: integral of cos over a period", 1.0)


def constant_observable(c: float = 1.0) -> Observable:
    return Observable(f"const({c:g})", lambda X: np.full(X.shape[:-1], float(c)), float(c),
                      "closed form", abs(float(c)))


BUILTIN_OBSERVABLES = {
    "cos1": lambda: cos_observable(0),
    "cos2": lambda: cos_observable(1),
    "const": lambda: constant_observable(1.0),
}


def make_observable(name: str) -> Observable:
    if name not in BUILTIN_OBSERVABLES:
        raise ValidationError(f"unknown observable {name!r}; choose from {sorted(BUILTIN_OBSERVABLES)}")
    return BUILTIN_OBSERVABLES[name]()


def birkhoff_average(s: SmoothSystem, g: Observable, x, n: int) -> np.ndarray:
    """(1/n) sum_{k<n} g(f^k x); x may be a batch (N, 2)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    y = s.reduce(np.asarray(x, float))
    acc = np.zeros(y.shape[:-1])
    for k in range(n):
        acc += g(y)
        if k + 1 < n:
            y = s.apply(y)
    return acc / n


@dataclass
class BasinReport:
    per_point: list
    mean: float
    spread: float
    reference: float | None
    fraction_converged: float
    tolerance: float
    n_iters: int
    stderr: float

    def to_json(self) -> dict:
        return {"mean": self.mean, "spread": self.spread, "reference": self.reference,
                "fraction_converged": self.fraction_converged, "tolerance": self.tolerance,
                "n_iters": self.n_iters, "n_points": len(self.per_point), "stderr": self.stderr}


def basin_experiment(s: SmoothSystem, g: Observable, n_points: int, n_iters: int, seed: int = 0,
                     tolerance: float | None = None) -> BasinReport:
    """Time averages from n_points Lebesgue-uniform starts on the unit square.

    fraction_converged is the share within `tolerance` of the reference
    integral (or of the sample mean when there is none). The default
    tolerance is 3 sup|g| / sqrt(n_iters).
    """
    if n_points < 10:
        raise ValidationError("n_points must be >= 10")
    X = krng.uniform(seed, krng.STREAM_BASIN, 0, n_points)
    avg = birkhoff_average(s, g, X, n_iters)
    tol = 3 * g.sup_abs / math.sqrt(n_iters) if tolerance is None else float(tolerance)
    centre = g.reference_integral if g.reference_integral is not None else float(avg.mean())
    frac = float(np.mean(np.abs(avg - centre) <= tol))
    per = [(tuple(map(float, x)), float(a), n_iters) for x, a in zip(X, avg)]
    return BasinReport(per, float(avg.mean()), float(avg.std()), g.reference_integral, frac, tol,
                       n_iters, float(avg.std() / math.sqrt(n_points)))


# ---------------------------------------------------------------------------
# Markov codings

class MarkovCoding:
    """A finite partition of the phase space with a declared transition SFT."""

    def __init__(self, name: str, sft: SFT, labels):
        self.name, self.sft, self.labels = name, sft, list(labels)

    def symbol(self, X) -> np.ndarray:
        raise NotImplementedError

    def check(self, s: SmoothSystem, n_samples: int = 20000, seed: int = 0) -> dict:
        """Observed one-step transitions must all be allowed by the SFT."""
        X = krng.uniform(seed, krng.STREAM_BASIN + 100, 0, n_samples)
        a, b = self.symbol(X), self.symbol(s.apply(X))
        if np.any(a < 0) or np.any(b < 0):
            raise CodingMismatchError(f"{self.name}: points not covered by the partition")
        bad = self.sft.A[a, b] == 0
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise CodingMismatchError(
                f"{self.name}: transition {self.labels[a[i]]}->{self.labels[b[i]]} not allowed by the declared SFT")
        counts = np.zeros_like(self.sft.A)
        np.add.at(counts, (a, b), 1)
        return {"transitions": counts.tolist(), "ok": True}


class BakerCoding(MarkovCoding):
    def __init__(self, p: float = 0.5):
        super().__init__(f"baker(p={p})", SFT(np.ones((2, 2), dtype=int)), ["L", "R"])
        self.p = p

    def symbol(self, X):
        return (np.asarray(X)[..., 0] >= self.p).astype(np.int64)


_C = math.sqrt(1 + PHI ** 2)
GOLDEN_U = np.array([PHI, 1.0]) / _C
GOLDEN_S = np.array([1.0, -PHI]) / _C
SIDE_P, SIDE_Q = PHI / _C, 1.0 / _C

# square P = [0, a] x [0, a] and Q = [a, a + b] x [0, b] in (u, s) coordinates;
# their translates by Z^2 tile the plane
GOLDEN_RECTANGLES = {
    "P": ((0.0, SIDE_P), (0.0, SIDE_P)),
    "Q": ((SIDE_P, SIDE_P + SIDE_Q), (0.0, SIDE_Q)),
}


def golden_symbol(X) -> np.ndarray:
    """0 for P, 1 for Q, -1 if uncovered (boundary up to rounding)."""
    X = np.mod(np.asarray(X, float), 1.0)
    out = np.full(X.shape[:-1], -1, dtype=np.int64)
    for i in range(-2, 3):
        for j in range(-2, 3):
            Y = X + np.array([i, j])
            xi, eta = Y @ GOLDEN_U, Y @ GOLDEN_S
            for sym, ((x0, x1), (y0, y1)) in enumerate(GOLDEN_RECTANGLES.values()):
                hit = (xi >= x0) & (xi < x1) & (eta >= y0) & (eta < y1)
                out[hit] = sym
    return out


class GoldenCoding(MarkovCoding):
    def __init__(self):
        super().__init__("golden-two-squares", SFT([[1, 1], [1, 0]]), ["P", "Q"])

    def symbol(self, X):
        return golden_symbol(X)


class CatCoding(MarkovCoding):
    """Cat map A = B^2: symbols are golden pairs (c(x), c(Bx)) in {PP, PQ, QP}."""

    PAIRS = [(0, 0), (0, 1), (1, 0)]

    def __init__(self):
        super().__init__("cat-golden-pairs", SFT([[1, 1, 1], [1, 1, 0], [1, 1, 1]]), ["PP", "PQ", "QP"])

    def symbol(self, X):
        X = np.asarray(X, float)
        a = golden_symbol(X)
        b = golden_symbol(np.mod(X @ GOLDEN.T, 1.0))
        out = np.full(a.shape, -1, dtype=np.int64)
        for k, (p, q) in enumerate(self.PAIRS):
            out[(a == p) & (b == q)] = k
        return out


def coding_for(s: SmoothSystem) -> MarkovCoding:
    if isinstance(s, BakerMap):
        return BakerCoding(s.p)
    if s.name == "cat-map":
        return CatCoding()
    if s.name == "golden-cat-map":
        return GoldenCoding()
    raise ValidationError(f"no Markov coding shipped for {s.name}")


def gibbs_vs_birkhoff(s: SmoothSystem, coding: MarkovCoding, pot: CylinderPotential, g_shift: dict,
                      n_points: int = 50, n_iters: int = 20000, seed: int = 0) -> dict:
    """Compare int g d(gibbs) on the shift with Birkhoff averages of g o coding.

    g_shift maps words of a fixed length l (tuples of symbols) to values;
    missing admissible words count as 0. The coding is first checked for
    consistency with the SFT under s.
    """
    coding.check(s, seed=seed)
    lengths = {len(w) for w in g_shift}
    if len(lengths) != 1:
        raise ValidationError("cylinder observable must use words of one length")
    ell = lengths.pop()
    sft = coding.sft
    data = rpf_solve(sft, pot)
    W, mass = cylinder_masses(sft, pot, data, ell)
    shift_side = float(sum(m * g_shift.get(tuple(map(int, w)), 0.0) for w, m in zip(W, mass)))

    X = krng.uniform(seed, krng.STREAM_BASIN, 0, n_points)
    y = s.reduce(X)
    window = [coding.symbol(y)]
    for _ in range(ell - 1):
        y = s.apply(y)
        window.append(coding.symbol(y))
    k = sft.alphabet_size
    table = np.zeros(k ** ell)
    powers = k ** np.arange(ell - 1, -1, -1)
    for w, v in g_shift.items():
        table[int(np.dot(w, powers))] = v
    acc = np.zeros(n_points)
    for _ in range(n_iters):
        syms = np.stack(window, axis=1)
        if np.any(syms < 0):
            raise CodingMismatchError("orbit left the coded partition")
        acc += table[syms @ powers]
        y = s.apply(y)
        window = window[1:] + [coding.symbol(y)]
    avg = acc / n_iters
    return {"shift_integral": shift_side, "birkhoff_mean": float(avg.mean()),
            "birkhoff_stderr": float(avg.std() / math.sqrt(n_points)),
            "difference": float(avg.mean() - shift_side), "word_length": ell}

