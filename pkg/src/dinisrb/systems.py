"""Model systems on the 2-torus (and the plane) with explicit differentials.

All maps act on arrays of shape (2,) or (N, 2); differentials come back as
(2, 2) or (N, 2, 2). Torus coordinates are kept in [0, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError
from .modulus import Modulus

CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
GOLDEN = np.array([[1.0, 1.0], [1.0, 0.0]])
LAMBDA_PLUS = (3 + math.sqrt(5)) / 2
PHI = (1 + math.sqrt(5)) / 2
MAX_ORBIT = 100_000


def torus_reduce(x):
    y = np.mod(x, 1.0)
    # mod can round up to exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def torus_diff(x, y):
    """Shortest displacement y - x on the torus, componentwise in [-1/2, 1/2)."""
    d = np.asarray(y, float) - np.asarray(x, float)
    return d - np.floor(d + 0.5)


def torus_distance(x, y):
    d = torus_diff(x, y)
    return np.sqrt(np.sum(d * d, axis=-1))


class SmoothSystem:
    """Invertible map with evaluable differential and inverse."""

    dim = 2
    torus = True
    name = "abstract"
    modulus_of_df: Modulus = Modulus.linear(0.0)

    def apply(self, x):
        raise NotImplementedError

    def apply_inv(self, x):
        raise NotImplementedError

    def differential(self, x):
        raise NotImplementedError

    def differential_inv(self, x):
        """Differential of f^-1 at x."""
        return np.linalg.inv(self.differential(self.apply_inv(x)))

    def reduce(self, x):
        return torus_reduce(x) if self.torus else np.asarray(x, float)

    def diff(self, x, y):
        return torus_diff(x, y) if self.torus else np.asarray(y, float) - np.asarray(x, float)

    def metric(self, x, y):
        if self.torus:
            return torus_distance(x, y)
        d = np.asarray(y, float) - np.asarray(x, float)
        return np.sqrt(np.sum(d * d, axis=-1))

    def descriptor(self) -> dict:
        return {"name": self.name, "params": {}}

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor()['params']})"


class LinearTorusMap(SmoothSystem):
    """x -> M x mod 1 for an integer matrix M with det = +-1."""

    def __init__(self, M, name="linear-torus"):
        M = np.asarray(M, dtype=float)
        if M.shape != (2, 2) or np.any(M != np.round(M)) or abs(abs(np.linalg.det(M)) - 1) > 1e-12:
            raise ValidationError("torus automorphism needs an integer 2x2 matrix with det +-1")
        self.M = M
        self.Minv = np.round(np.linalg.inv(M))
        self.name = name

    def apply(self, x):
        return torus_reduce(np.asarray(x, float) @ self.M.T)

    def apply_inv(self, x):
        return torus_reduce(np.asarray(x, float) @ self.Minv.T)

    def differential(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(self.M, x.shape[:-1] + (2, 2)).copy()

    def differential_inv(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(self.Minv, x.shape[:-1] + (2, 2)).copy()

    def descriptor(self):
        if self.name in ("cat-map", "golden-cat-map"):
            return {"name": self.name, "params": {}}
        return {"name": self.name, "params": {"matrix": self.M.tolist()}}


class PlanarLinearMap(SmoothSystem):
    """x -> M x on the plane (no reduction)."""

    torus = False

    def __init__(self, M, name="linear-planar"):
        self.M = np.asarray(M, dtype=float)
        if abs(np.linalg.det(self.M)) < 1e-14:
            raise ValidationError("singular matrix")
        self.Minv = np.linalg.inv(self.M)
        self.name = name

    def apply(self, x):
        return np.asarray(x, float) @ self.M.T

    def apply_inv(self, x):
        return np.asarray(x, float) @ self.Minv.T

    def differential(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(self.M, x.shape[:-1] + (2, 2)).copy()

    def differential_inv(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(self.Minv, x.shape[:-1] + (2, 2)).copy()

    def descriptor(self):
        return {"name": self.name, "params": {"matrix": self.M.tolist()}}


# ---------------------------------------------------------------------------
# the non-Hoelder perturbation

N_BUMPS = 21  # k = 0 .. 20
_K = np.arange(N_BUMPS)
_W = 1.0 / (_K + 2.0) ** 3
_FREQ = 2.0 ** _K


def _phase(x):
    # 2^k x mod 1 is exact in binary floating point, so the sine never sees
    # a large argument
    y = np.asarray(x, float)[..., None] * _FREQ
    y -= np.floor(y)
    y *= 2 * np.pi
    return y


def bump_h(x):
    """h(x) = sum_k 2^-k b(2^k x) / (k+2)^3 with b(x) = sin(2 pi x)/(2 pi)."""
    return np.sin(_phase(x)) @ (_W / _FREQ) / (2 * np.pi)


def bump_dh(x):
    return np.cos(_phase(x)) @ _W


def _bump_h_dh(x):
    ph = _phase(x)
    return np.sin(ph) @ (_W / _FREQ) / (2 * np.pi), np.cos(ph) @ _W


BUMP_DH_BOUND = float(np.sum(_W))  # sup |h'|


def bump_dh_modulus_bound(d):
    """Upper bound for |h'(x) - h'(y)| at distance d."""
    d = np.asarray(d, float)
    return np.sum(np.minimum(2 * np.pi * _FREQ * d[..., None], 2.0) * _W, axis=-1)


class PerturbedAutomorphism(SmoothSystem):
    """f = A^n o g o A^n with A the cat matrix and g = id + eps*(h(x1), h(x2))."""

    def __init__(self, eps: float, n_conj: int = 1):
        if n_conj < 1:
            raise ValidationError("n_conj must be >= 1")
        if eps < 0 or 1 - eps * BUMP_DH_BOUND < 0.5:
            raise ValidationError(
                f"eps={eps} exceeds the diffeomorphism threshold {0.5 / BUMP_DH_BOUND:.4f}")
        self.eps = float(eps)
        self.n_conj = int(n_conj)
        self.An = np.linalg.matrix_power(CAT.astype(np.int64), n_conj).astype(float)
        self.Ainv = np.round(np.linalg.inv(CAT))
        self.name = "perturbed"
        self.modulus_of_df = self._declared_modulus()

    def _declared_modulus(self) -> Modulus:
        # |df_x - df_y| <= |A^n|^2 eps |h'(u) - h'(v)| with |u - v| <= |A^n| d(x, y)
        if self.eps == 0:
            return Modulus.linear(0.0)
        norm = np.linalg.norm(self.An, 2)
        ref = Modulus.log_power(2.0)
        ds = np.geomspace(1e-300, 1.0, 4000)
        C = float(np.max(bump_dh_modulus_bound(np.minimum(norm * ds, 1.0)) / ref.eval(ds)))
        return Modulus.log_power(2.0, scale=norm ** 2 * self.eps * C)

    def _lin(self, x, inverse=False):
        M = self.Ainv if inverse else CAT
        for _ in range(self.n_conj):
            x = torus_reduce(x @ M.T)
        return x

    def _g(self, x):
        return torus_reduce(x + self.eps * bump_h(x))

    def _g_inv(self, y):
        x = y - self.eps * bump_h(y)
        for _ in range(50):
            h, dh = _bump_h_dh(x)
            step = (x + self.eps * h - y) / (1 + self.eps * dh)
            x = x - step
            # quadratic convergence: once the step is 1e-9 the update just
            # applied is accurate to rounding
            if np.max(np.abs(step)) < 1e-9:
                break
        return torus_reduce(x)

    def apply(self, x):
        return self._lin(self._g(self._lin(np.asarray(x, float))))

    def apply_inv(self, x):
        return self._lin(self._g_inv(self._lin(np.asarray(x, float), True)), True)

    def differential(self, x):
        y = self._lin(np.asarray(x, float))
        dg = 1 + self.eps * bump_dh(y)  # (..., 2)
        # A^n diag(dg) A^n
        return np.einsum("ij,...j,jk->...ik", self.An, dg, self.An)

    def descriptor(self):
        return {"name": "perturbed", "params": {"eps": self.eps, "n_conj": self.n_conj}}


def _mix64(x, y):
    """Uniform [0, 1) values hashed from the bit patterns of x and y (splitmix64)."""
    with np.errstate(over="ignore"):
        z = np.ascontiguousarray(x, dtype=np.float64).view(np.uint64) ^ (
            np.ascontiguousarray(y, dtype=np.float64).view(np.uint64) * np.uint64(0x9E3779B97F4A7C15))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53).reshape(np.shape(x))


class BakerMap(SmoothSystem):
    """Generalized baker map on the unit square, coded by the full 2-shift.

    (x, y) -> (x/p, p y) if x < p else ((x-p)/(1-p), p + (1-p) y).
    Piecewise affine; its geometric potential is log p on symbol 0 and
    log(1-p) on symbol 1.
    """

    def __init__(self, p: float = 0.5):
        if not 0 < p < 1:
            raise ValidationError("p must lie in (0, 1)")
        self.p = float(p)
        self.name = "baker"

    def _expand(self, x, y):
        p = self.p
        if p == 0.5:
            # 2x mod 1 shifts one bit out of the mantissa per step, so every
            # float orbit dies at 0 within ~53 steps. The vacated low bits are
            # refilled from a hash of the full (x, y) state: the result is the
            # orbit of a point within 2^-52 whose unresolved digits are
            # pseudo-random, as for a Lebesgue-typical start.
            out = 2.0 * x
            out -= np.floor(out)
            u = _mix64(x, y)
            out = out + u * 2.0 ** -52
            return out - np.floor(out)
        return np.where(x < p, x / p, (x - p) / (1 - p))

    def apply(self, x):
        x = np.asarray(x, float)
        p = self.p
        a, b = x[..., 0], x[..., 1]
        left = a < p
        nb = np.where(left, p * b, p + (1 - p) * b)
        return np.stack([self._expand(a, b), nb], axis=-1)

    def apply_inv(self, x):
        x = np.asarray(x, float)
        p = self.p
        a, b = x[..., 0], x[..., 1]
        low = b < p
        na = np.where(low, p * a, p + (1 - p) * a)
        nb = np.where(low, b / p, (b - p) / (1 - p))
        return np.stack([na, nb], axis=-1)

    def differential(self, x):
        x = np.asarray(x, float)
        left = x[..., 0] < self.p
        s = np.where(left, self.p, 1 - self.p)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1 / s
        out[..., 1, 1] = s
        return out

    def descriptor(self):
        return {"name": "baker", "params": {"p": self.p}}


def make_cat_map() -> LinearTorusMap:
    return LinearTorusMap(CAT, name="cat-map")


def make_golden_cat_map() -> LinearTorusMap:
    """x -> [[1,1],[1,0]] x mod 1, whose square is the cat map."""
    return LinearTorusMap(GOLDEN, name="golden-cat-map")


def make_perturbed_automorphism(eps: float, n_conj: int = 1) -> PerturbedAutomorphism:
    return PerturbedAutomorphism(eps, n_conj)


def make_system(desc: dict) -> SmoothSystem:
    """Build a system from a JSON descriptor {name, params}."""
    if not isinstance(desc, dict) or "name" not in desc:
        raise ValidationError("system descriptor needs a 'name'")
    name = desc["name"]
    params = dict(desc.get("params", {}))
    builders: dict[str, Callable] = {
        "cat-map": lambda: make_cat_map(),
        "golden-cat-map": lambda: make_golden_cat_map(),
        "perturbed": lambda eps=0.01, n_conj=1: make_perturbed_automorphism(eps, n_conj),
        "linear-torus": lambda matrix: LinearTorusMap(matrix),
        "linear-planar": lambda matrix: PlanarLinearMap(matrix),
        "baker": lambda p=0.5: BakerMap(p),
        "identity": lambda: LinearTorusMap(np.eye(2), name="identity"),
    }
    if name not in builders:
        raise ValidationError(f"unknown system {name!r}; known: {sorted(builders)}")
    try:
        return builders[name](**params)
    except TypeError as e:
        raise ValidationError(f"bad parameters for system {name!r}: {e}") from None


# ---------------------------------------------------------------------------

def orbit(s: SmoothSystem, x, n: int) -> np.ndarray:
    """[x, f x, ..., f^n x]; for n < 0 the backward orbit via f^-1.

    Accepts a single point (2,) -> (|n|+1, 2) or a batch (N, 2) -> (|n|+1, N, 2).
    """
    if abs(n) > MAX_ORBIT:
        raise ValidationError(f"|n| > {MAX_ORBIT}")
    x = s.reduce(np.asarray(x, float))
    step = s.apply if n >= 0 else s.apply_inv
    out = np.empty((abs(n) + 1,) + x.shape)
    out[0] = x
    for k in range(1, abs(n) + 1):
        out[k] = step(out[k - 1])
    return out


def differential_power(s: SmoothSystem, x, n: int) -> np.ndarray:
    """d(f^n)_x as the product of step differentials along the orbit."""
    orb = orbit(s, x, n)
    D = np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)).copy()
    for k in range(n):
        D = np.einsum("...ij,...jk->...ik", s.differential(orb[k]), D)
    return D


def growth_rates(s: SmoothSystem, x, n: int, v=None):
    """Per-step expansion and contraction factors measured along an n-orbit.

    Returns ratios |Df^(k+1) v| / |Df^k v| at the last step for the forward
    (expansion) and backward (inverse of contraction) iterations, which
    converge to the extreme eigenvalue moduli for linear maps.
    """
    v = np.array([1.0, 0.3]) if v is None else np.asarray(v, float)
    x = s.reduce(np.asarray(x, float))

    def last_ratio(step, dfn):
        y, w = x, v / np.linalg.norm(v)
        r = 1.0
        for _ in range(n):
            w2 = dfn(y) @ w
            r = np.linalg.norm(w2)
            w = w2 / r
            y = step(y)
        return r

    expansion = last_ratio(s.apply, s.differential)
    contraction = 1.0 / last_ratio(s.apply_inv, s.differential_inv)
    return expansion, contraction


# ---------------------------------------------------------------------------
# cones

@dataclass
class ConeField:
    """K(x) = {v = a e_u + b e_s : |b| <= alpha |a|} around a splitting.

    center: either a fixed pair (e_u, e_s) of vectors or a callable x -> pair.
    """
    center: object
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("cone aperture must be positive")

    def frame(self, x):
        eu, es = self.center(x) if callable(self.center) else self.center
        eu = np.asarray(eu, float)
        es = np.asarray(es, float)
        return eu / np.linalg.norm(eu), es / np.linalg.norm(es)

    def coords(self, x, v):
        eu, es = self.frame(x)
        return np.linalg.solve(np.column_stack([eu, es]), v)

    def contains(self, x, v) -> bool:
        a, b = self.coords(x, v)
        return abs(b) <= self.alpha * abs(a)

    def rays(self, x, n_interior: int = 0):
        eu, es = self.frame(x)
        ts = np.linspace(-self.alpha, self.alpha, n_interior + 2)
        return [eu + t * es for t in ts]


@dataclass
class ConeReport:
    ok: bool
    margin: float
    inclusion_margin: float
    expansion_margin: float

    def __bool__(self):
        return self.ok


def cone_invariance_check(s: SmoothSystem, cones: ConeField, sample, stable: ConeField | None = None,
                          n_dirs: int = 33) -> ConeReport:
    """Strict invariance of an unstable cone field (and optional stable one).

    For each x: the images of the two boundary rays of K(x) must lie strictly
    inside K(f x) (margin alpha - |b|/|a| > 0), and every vector w in
    df_x K(x) must satisfy |df_x^-1 w| < |w|, checked on n_dirs directions
    across the cone. A stable cone is checked the same way under f^-1.
    """
    sample = np.atleast_2d(np.asarray(sample, float))
    inc, exp_ = math.inf, math.inf

    def one(cf, fwd, dfun, x):
        nonlocal inc, exp_
        fx = fwd(x)
        D = dfun(x)
        for v in cf.rays(x):
            a, b = cf.coords(fx, D @ v)
            inc = min(inc, cf.alpha - abs(b) / abs(a) if a != 0 else -math.inf)
        for v in cf.rays(x, n_dirs - 2):
            w = D @ v
            exp_ = min(exp_, 1.0 - np.linalg.norm(v) / np.linalg.norm(w))

    for x in sample:
        one(cones, s.apply, s.differential, x)
        if stable is not None:
            one(stable, s.apply_inv, s.differential_inv, x)
    margin = min(inc, exp_)
    return ConeReport(margin > 0, margin, inc, exp_)


def cat_eigenvectors(M=CAT):
    """Unit (unstable, stable) eigenvectors of a symmetric hyperbolic matrix."""
    w, V = np.linalg.eigh(np.asarray(M, float))
    iu = int(np.argmax(np.abs(w)))
    eu, es = V[:, iu], V[:, 1 - iu]
    if eu[0] < 0:
        eu = -eu
    if es[1] < 0:
        es = -es
    return eu, es
