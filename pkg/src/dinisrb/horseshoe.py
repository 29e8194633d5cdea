"""A C^1 horseshoe with a fat Cantor set.

Two Cantor sets are cut from intervals by removing centred gaps: K_I from
I = [beta_0/2, 1] with gap schedule alpha_n, and K_J from J = [-1, 1] with
gap schedule beta_n, where

    beta_n = 1/(n+10)^2,   alpha_n = beta_{n+1}/2,   delta_n = 2 beta_n/beta_{n+1} - 2.

At level n there are 2^n gaps, each of length schedule_n / 2^n. The
interval map g : I -> J sends each node of the first tree to the matching
node of the second, gaps to gaps. On a gap of level n the mean slope is
beta_n/alpha_n = 2 + delta_n while the slope at the gap's ends is 2, so g'
oscillates by about delta_n on a set of diameter < 2^-n. Since delta_n ~ 4/n
the derivative's modulus is not Dini, and yet K_J x K_J has positive area.

Node lengths are exact rationals; positions are doubles derived from them.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .modulus import Modulus, empirical_modulus, pairs_from_samples

MAX_TREE_DEPTH = 40
MAX_MAP_DEPTH = 30
MAX_LEAF_DEPTH = 22   # 2^23 leaves as float arrays


@dataclass(frozen=True)
class InverseSquareSchedule:
    """term(n) = scale / (n + offset)^2 for n >= 0."""

    offset: int = 10
    scale: Fraction = Fraction(1)

    def term(self, n: int) -> Fraction:
        return Fraction(self.scale) / (n + self.offset) ** 2

    def partial(self, N: int) -> float:
        """sum_{n<=N} term(n) in double precision."""
        n = np.arange(N + 1, dtype=float)
        return math.fsum(float(self.scale) / (n + self.offset) ** 2)

    def tail_bounds(self, N: int):
        """Bounds on sum_{n>N} term(n) from integrals of 1/(x+offset)^2."""
        s = float(self.scale)
        return s / (N + 1 + self.offset), s / (N + self.offset)

    def total_bounds(self, N: int = 10 ** 5):
        p = self.partial(N)
        lo, hi = self.tail_bounds(N)
        return p + lo, p + hi


@dataclass(frozen=True)
class HorseshoeParams:
    offset: int = 10
    alpha_scale: Fraction = Fraction(1, 2)  # alpha_n = alpha_scale * beta_{n+1}

    def __post_init__(self):
        if self.offset < 1:
            raise ValidationError("offset must be >= 1")
        if not Fraction(self.alpha_scale) > 0:
            raise ValidationError("alpha_scale must be positive")
        if not self.beta_schedule.total_bounds()[1] < 2:
            raise ValidationError("sum of beta_n must be < 2")

    @property
    def beta_schedule(self) -> InverseSquareSchedule:
        return InverseSquareSchedule(self.offset, Fraction(1))

    @property
    def alpha_schedule(self) -> InverseSquareSchedule:
        # beta_{n+1} = 1/(n+1+offset)^2
        return InverseSquareSchedule(self.offset + 1, Fraction(self.alpha_scale))

    def beta(self, n: int) -> Fraction:
        return self.beta_schedule.term(n)

    def alpha(self, n: int) -> Fraction:
        return self.alpha_schedule.term(n)

    def delta(self, n: int) -> Fraction:
        return 2 * self.beta(n) / self.beta(n + 1) - 2

    @property
    def I(self):
        return (self.beta(0) / 2, Fraction(1))

    @property
    def J(self):
        return (Fraction(-1), Fraction(1))

    def to_dict(self) -> dict:
        return {"offset": self.offset, "alpha_scale": str(self.alpha_scale)}


def delta_float(n, offset: int = 10):
    """delta_n = 2 (2n + 2 offset + 1) / (n + offset)^2, vectorised."""
    n = np.asarray(n, dtype=float)
    return 2 * (2 * n + 2 * offset + 1) / (n + offset) ** 2


# ---------------------------------------------------------------------------
# Cantor tree

class CantorTree:
    """Implicit binary tree of intervals I_a with centred gaps I*_a.

    All nodes of one level share a length, so the tree is stored as two
    exact sequences: node_length[k] (level-k nodes) and gap_length[k]
    (gaps cut from level-k nodes), k = 0..depth (node_length has depth+2
    entries, the last being the leaves).
    """

    def __init__(self, interval, schedule: InverseSquareSchedule, depth: int):
        a, b = Fraction(interval[0]), Fraction(interval[1])
        if not b > a:
            raise ValidationError("interval must have positive length")
        if not 0 <= depth <= MAX_TREE_DEPTH:
            raise ValidationError(f"depth must be in [0, {MAX_TREE_DEPTH}]")
        if not schedule.total_bounds()[1] < float(b - a):
            raise ValidationError("gap schedule too large for the interval")
        self.interval = (a, b)
        self.schedule = schedule
        self.depth = depth
        L = [b - a]
        G = []
        for k in range(depth + 1):
            g = schedule.term(k) / 2 ** k
            G.append(g)
            L.append((L[-1] - g) / 2)
        if L[-1] <= 0:
            raise ValidationError("gap schedule too large for the interval")
        self.node_length = L
        self.gap_length = G
        self._Lf = np.array([float(x) for x in L])
        self._Gf = np.array([float(x) for x in G])

    @property
    def length(self) -> Fraction:
        return self.interval[1] - self.interval[0]

    def node(self, word) -> dict:
        """Exact endpoints of I_a and of its gap I*_a (word of 0/1, len <= depth)."""
        word = [int(c) for c in word]
        if len(word) > self.depth or any(c not in (0, 1) for c in word):
            raise ValidationError("word must be binary with length <= depth")
        left = self.interval[0]
        for k, c in enumerate(word):
            if c:
                left += self.node_length[k + 1] + self.gap_length[k]
        k = len(word)
        right = left + self.node_length[k]
        gl = left + self.node_length[k + 1]
        return {"left": left, "right": right, "gap_left": gl, "gap_right": gl + self.gap_length[k]}

    def remaining_length(self, m: int) -> Fraction:
        """Total length of the level-(m+1) nodes: |I| - sum_{n<=m} s_n."""
        if not 0 <= m <= self.depth:
            raise ValidationError("m out of range")
        return 2 ** (m + 1) * self.node_length[m + 1]

    def bookkeeping_error(self, m: int | None = None) -> dict:
        """Leaves plus removed gaps against |I|, exactly and in floats."""
        m = self.depth if m is None else m
        exact = self.remaining_length(m) + sum(2 ** k * self.gap_length[k] for k in range(m + 1))
        flt = 2.0 ** (m + 1) * self._Lf[m + 1] + math.fsum(2.0 ** k * self._Gf[k] for k in range(m + 1))
        return {"exact_residual": exact - self.length, "float_residual": abs(flt - float(self.length))}

    def leaves(self, m: int | None = None):
        """Left and right endpoints of the 2^(m+1) level-(m+1) intervals, in order."""
        m = self.depth if m is None else m
        if not 0 <= m <= min(self.depth, MAX_LEAF_DEPTH):
            raise ValidationError(f"leaf depth must be in [0, {min(self.depth, MAX_LEAF_DEPTH)}]")
        left = np.array([float(self.interval[0])])
        for k in range(m + 1):
            step = float(self.node_length[k + 1] + self.gap_length[k])
            left = np.stack([left, left + step], axis=1).reshape(-1)
        return left, left + self._Lf[m + 1]

    def measure_bounds(self, N: int = 10 ** 5):
        """Lebesgue measure of the Cantor set: |I| - sum_n s_n."""
        lo, hi = self.schedule.total_bounds(N)
        return float(self.length) - hi, float(self.length) - lo

    def rows(self, max_depth: int | None = None):
        m = self.depth if max_depth is None else min(max_depth, self.depth)
        words = [""]
        for k in range(m + 1):
            for w in words:
                nd = self.node(w)
                yield {"word": w or "-", **{key: float(v) for key, v in nd.items()}}
            words = [w + c for w in words for c in "01"]


def build_tree(interval, schedule: InverseSquareSchedule, depth: int) -> CantorTree:
    return CantorTree(interval, schedule, depth)


def write_tree_csv(tree: CantorTree, path, max_depth: int = 12):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["word", "left", "right", "gap_left", "gap_right"])
        for r in tree.rows(max_depth):
            w.writerow([r["word"], repr(r["left"]), repr(r["right"]), repr(r["gap_left"]), repr(r["gap_right"])])


# ---------------------------------------------------------------------------
# Lambda = K_J x K_J

def lambda_measure(params: HorseshoeParams | None = None, n_terms: int = 10 ** 5) -> dict:
    """(2 - sum beta_n)^2 with the series tail enclosed analytically."""
    params = params or HorseshoeParams()
    sched = params.beta_schedule
    p = sched.partial(n_terms)
    t_lo, t_hi = sched.tail_bounds(n_terms)
    m_hi = (2 - p - t_lo) ** 2
    m_lo = (2 - p - t_hi) ** 2
    t = 0.5 * (t_lo + t_hi)
    return {"value": 0.5 * (m_lo + m_hi), "lower": m_lo, "upper": m_hi,
            "beta_sum": p + t, "beta_sum_bounds": [p + t_lo, p + t_hi],
            "partial_sum": p, "n_terms": n_terms,
            "truncation": (2 - p) ** 2,
            "truncation_error_bound": 2 * (2 - p) * t_hi + t_hi ** 2,
            "positive": m_lo > 0}


def measure_truncations(params: HorseshoeParams | None, ds) -> list:
    """(2 - sum_{n<=d} beta_n)^2 for each d; decreases towards the limit."""
    params = params or HorseshoeParams()
    sched = params.beta_schedule
    out = []
    for d in ds:
        p = sched.partial(int(d))
        out.append({"d": int(d), "truncation": (2 - p) ** 2,
                    "error_bound": 2 * (2 - p) * sched.tail_bounds(int(d))[1] + sched.tail_bounds(int(d))[1] ** 2})
    return out


# ---------------------------------------------------------------------------
# the interval map g

BUMP_PEAK = 1.875  # max of 30 t^2 (1-t)^2


def _bump(t):
    return 30 * t * t * (1 - t) * (1 - t)


def _bump_int(t):
    return t * t * t * (10 + t * (-15 + 6 * t))


class HorseshoeMap:
    """g : I -> J at finite depth D.

    Pieces are the gaps of levels 0..D and the level-(D+1) leaves. On a
    piece of length l mapped onto length l', g' = 2 + A b(t) with
    b(t) = 30 t^2 (1-t)^2 on the piece's unit coordinate and A = l'/l - 2,
    so every piece has slope exactly 2 at both ends and g is C^1.
    """

    def __init__(self, params: HorseshoeParams, depth: int):
        if not 0 <= depth <= MAX_MAP_DEPTH:
            raise ValidationError(f"depth must be in [0, {MAX_MAP_DEPTH}]")
        self.params = params
        self.depth = depth
        self.tI = CantorTree(params.I, params.alpha_schedule, depth)
        self.tJ = CantorTree(params.J, params.beta_schedule, depth)
        D = depth
        self.gap_amp = np.array([float(self.tJ.gap_length[k] / self.tI.gap_length[k]) - 2 for k in range(D + 1)])
        self.leaf_amp = float(self.tJ.node_length[D + 1] / self.tI.node_length[D + 1]) - 2
        self.band = []
        for k in range(D + 1):
            A = self.gap_amp[k]
            dmin, dmax = 2 + min(0.0, A * BUMP_PEAK), 2 + max(0.0, A * BUMP_PEAK)
            lo = 2 - float(params.delta(k))
            hi = float(params.beta(k) / params.alpha(k) + params.delta(k))
            self.band.append((dmin, dmax, lo, hi))
            if dmin < lo - 1e-15 or dmax > hi + 1e-15 or dmin <= 0:
                raise ValidationError(f"band infeasible at level {k}: g' in [{dmin}, {dmax}] "
                                      f"but the band is [{lo}, {hi}]")
        if 2 + min(0.0, self.leaf_amp * BUMP_PEAK) <= 0:
            raise ValidationError("leaf pieces would not be monotone")

    def _locate(self, x):
        """Piece data for each x: (x0, length, y0, image length, amplitude)."""
        x = np.asarray(x, dtype=float)
        LI, GI = self.tI._Lf, self.tI._Gf
        LJ, GJ = self.tJ._Lf, self.tJ._Gf
        a, b = float(self.tI.interval[0]), float(self.tI.interval[1])
        if np.any((x < a - 1e-15) | (x > b + 1e-15)):
            raise ValidationError("x outside I")
        xl = np.full(x.shape, a)
        yl = np.full(x.shape, float(self.tJ.interval[0]))
        done = np.zeros(x.shape, bool)
        x0 = np.empty(x.shape)
        ln = np.empty(x.shape)
        y0 = np.empty(x.shape)
        lj = np.empty(x.shape)
        amp = np.empty(x.shape)
        for k in range(self.depth + 1):
            gs = xl + LI[k + 1]
            ge = gs + GI[k]
            in_gap = ~done & (x >= gs) & (x < ge)
            x0[in_gap], ln[in_gap] = gs[in_gap], GI[k]
            y0[in_gap], lj[in_gap] = (yl + LJ[k + 1])[in_gap], GJ[k]
            amp[in_gap] = self.gap_amp[k]
            done |= in_gap
            right = ~done & (x >= ge)
            xl = np.where(right, ge, xl)
            yl = np.where(right, yl + LJ[k + 1] + GJ[k], yl)
        rest = ~done
        x0[rest], ln[rest], y0[rest], lj[rest] = xl[rest], LI[-1], yl[rest], LJ[-1]
        amp[rest] = self.leaf_amp
        return x, x0, ln, y0, amp

    def __call__(self, x):
        x, x0, ln, y0, amp = self._locate(x)
        t = np.clip((x - x0) / ln, 0.0, 1.0)
        return y0 + 2 * (x - x0) + amp * ln * _bump_int(t)

    def derivative(self, x):
        x, x0, ln, _, amp = self._locate(x)
        t = np.clip((x - x0) / ln, 0.0, 1.0)
        return 2 + amp * _bump(t)

    def breakpoints(self, m: int | None = None) -> np.ndarray:
        """All piece endpoints down to level m (default: the full depth)."""
        m = self.depth if m is None else m
        if m > MAX_LEAF_DEPTH:
            raise ValidationError("too many breakpoints")
        left, right = self.tI.leaves(m)
        return np.unique(np.concatenate([left, right]))

    def gap_witness(self, n: int):
        """Left end and centre of the leftmost level-n gap."""
        nd = self.tI.node("0" * n)
        xl, xr = float(nd["gap_left"]), float(nd["gap_right"])
        return xl, 0.5 * (xl + xr)

    def leaf_slope_deviation(self) -> float:
        """max |g' - 2| on the level-(D+1) leaves; tends to 0 with depth."""
        return abs(self.leaf_amp) * BUMP_PEAK


def build_g(params: HorseshoeParams | None = None, depth: int = 10) -> HorseshoeMap:
    return HorseshoeMap(params or HorseshoeParams(), depth)


# ---------------------------------------------------------------------------
# Dini-violation certificate

def derivative_samples(g: HorseshoeMap, per_gap: int = 33):
    """g' sampled across the leftmost gap of every level."""
    xs = []
    for n in range(g.depth + 1):
        nd = g.tI.node("0" * n)
        xs.append(np.linspace(float(nd["gap_left"]), float(nd["gap_right"]), per_gap))
    xs = np.concatenate(xs)
    return xs, g.derivative(xs)


def empirical_derivative_modulus(g: HorseshoeMap, per_gap: int = 33) -> Modulus:
    xs, v = derivative_samples(g, per_gap)
    return empirical_modulus(pairs_from_samples(xs, v))


def delta_partial_sums(N: int, offset: int = 10) -> np.ndarray:
    """sum_{n<=k} delta_n for k = 0..N."""
    return np.cumsum(delta_float(np.arange(N + 1), offset))


@dataclass
class DiniCertificate:
    rows: list
    all_dominated: bool
    partial_sums: dict
    first_N_above_10: int | None
    fitted_log_slope: float
    lower_bound_holds: bool
    modulus_sum: float
    delta_sum: float
    depth: int

    def to_json(self) -> dict:
        return {"rows": self.rows, "all_dominated": self.all_dominated,
                "partial_sums": {str(k): v for k, v in self.partial_sums.items()},
                "first_N_above_10": self.first_N_above_10, "fitted_log_slope": self.fitted_log_slope,
                "lower_bound": "delta_n >= 4/(n + offset + 1)", "lower_bound_holds": self.lower_bound_holds,
                "modulus_sum": self.modulus_sum, "delta_sum": self.delta_sum, "depth": self.depth}

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def dini_violation_certificate(params: HorseshoeParams | None = None, depth: int = 20,
                               m: Modulus | None = None, N: int = 10 ** 4) -> DiniCertificate:
    """Check delta_n <= m(2^-n) for n <= depth and the divergence of sum delta_n.

    m defaults to the empirical modulus of the built g'. Divergence is
    certified by the elementary bound delta_n >= 4/(n + offset + 1), checked
    termwise up to N, together with partial sums and their slope in log N.
    """
    params = params or HorseshoeParams()
    g = build_g(params, depth)
    m = empirical_derivative_modulus(g) if m is None else m
    rows = []
    ps = 0.0
    for n in range(depth + 1):
        d = float(params.delta(n))
        ps += d
        xl, xc = g.gap_witness(n)
        jump = float(abs(g.derivative(np.array([xc]))[0] - g.derivative(np.array([xl]))[0]))
        t = 2.0 ** -n
        w = float(m(min(t, m.t_max)))
        rows.append({"n": n, "delta_n": d, "omega_bound": w, "partial_sum": ps,
                     "dominated": d <= w, "witness_distance": xc - xl, "witness_jump": jump})
    dom = all(r["dominated"] for r in rows)
    S = delta_partial_sums(N, params.offset)
    above = np.flatnonzero(S > 10)
    first = int(above[0]) if above.size else None
    Ns = np.unique(np.logspace(2, math.log10(N), 30).astype(int))
    Ns = Ns[Ns <= N]
    slope = float(np.polyfit(np.log(Ns), S[Ns], 1)[0]) if Ns.size >= 2 else math.nan
    n = np.arange(N + 1)
    lb = bool(np.all(delta_float(n, params.offset) >= 4 / (n + params.offset + 1)))
    msum = math.fsum(r["omega_bound"] for r in rows)
    dsum = math.fsum(r["delta_n"] for r in rows)
    marks = {k: float(S[k]) for k in (10, 100, 1000, 2000, N) if k <= N}
    return DiniCertificate(rows, dom, marks, first, slope, lb, msum, dsum, depth)
