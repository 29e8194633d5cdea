"""Moduli of continuity, Dini summability and the omega-tilde transforms.

A modulus is a concave non-decreasing function with omega(0) = 0. Four kinds
are supported: ``power`` (t**alpha), ``log_power`` (1/log(1/t)**beta near 0,
affine above a cutoff), ``linear`` and ``table`` (piecewise linear through
sample points).

Integrals of omega(t)/t over (0, t] are computed in the variable u = log t,
where they become integrals of omega(e^u) over a half line. The half line is
cut into dyadic blocks and the block sums are tested for geometric decay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, NonDiniError, ValidationError

KINDS = ("power", "log_power", "linear", "table")

# block-ratio threshold: a run of block ratios above 1 - ETA is read as divergence
ETA = 0.02
_DIRECT_TERMS = 1 << 16


@dataclass(frozen=True, eq=False)
class Modulus:
    kind: str
    params: dict = field(default_factory=dict)
    t_max: float = 1.0
    scale: float = 1.0
    ts: np.ndarray | None = None
    ws: np.ndarray | None = None

    # ---- constructors -------------------------------------------------
    @classmethod
    def power(cls, alpha: float, t_max: float = 1.0, scale: float = 1.0) -> "Modulus":
        if not 0 < alpha <= 1:
            raise ValidationError(f"power modulus needs 0 < alpha <= 1, got {alpha}")
        return cls("power", {"alpha": float(alpha)}, float(t_max), float(scale))

    @classmethod
    def log_power(cls, beta: float, t_max: float = 1.0, scale: float = 1.0,
                  cutoff: float | None = None) -> "Modulus":
        """1/log(1/t)**beta for t <= cutoff, tangent line above.

        The curve is concave exactly on (0, exp(-(beta+1))], so the default
        cutoff is exp(-max(2, beta+1)).
        """
        if beta <= 0:
            raise ValidationError(f"log_power needs beta > 0, got {beta}")
        c0 = max(2.0, beta + 1.0) if cutoff is None else -math.log(cutoff)
        if c0 < beta + 1.0 - 1e-12:
            raise ValidationError("cutoff above exp(-(beta+1)) breaks concavity")
        return cls("log_power", {"beta": float(beta), "c0": float(c0)}, float(t_max), float(scale))

    @classmethod
    def linear(cls, slope: float = 1.0, t_max: float = 1.0) -> "Modulus":
        if slope < 0:
            raise ValidationError("slope must be non-negative")
        return cls("linear", {"slope": float(slope)}, float(t_max), 1.0)

    @classmethod
    def table(cls, ts: Sequence[float], ws: Sequence[float], t_max: float | None = None,
              rtol: float = 1e-9) -> "Modulus":
        ts = np.asarray(ts, dtype=float)
        ws = np.asarray(ws, dtype=float)
        if ts.ndim != 1 or ts.shape != ws.shape or ts.size == 0:
            raise ValidationError("table needs two equal-length 1-d arrays")
        if ts[0] != 0.0:
            if ts[0] < 0:
                raise ValidationError("table abscissae must be non-negative")
            ts = np.concatenate([[0.0], ts])
            ws = np.concatenate([[0.0], ws])
        if ws[0] != 0.0:
            raise ValidationError("table must satisfy omega(0) = 0")
        if np.any(np.diff(ts) <= 0):
            raise ValidationError("table abscissae must be strictly increasing")
        slopes = np.diff(ws) / np.diff(ts)
        tol = rtol * max(1.0, float(np.max(np.abs(slopes))))
        if np.any(slopes < -tol):
            raise ValidationError("table is not non-decreasing")
        if np.any(np.diff(slopes) > tol):
            raise ValidationError("table chord slopes increase: not concave")
        tm = float(ts[-1]) if t_max is None else float(t_max)
        return cls("table", {}, tm, 1.0, ts, ws)

    # ---- evaluation ---------------------------------------------------
    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_max * (1 + 1e-12)):
            raise DomainError(f"t outside [0, {self.t_max}]")
        return t

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = self._check(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._raw(t)
        out = np.where(t == 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def _raw(self, t):
        k = self.kind
        if k == "power":
            return self.scale * t ** self.params["alpha"]
        if k == "linear":
            return self.params["slope"] * t
        if k == "table":
            return np.interp(t, self.ts, self.ws)
        beta, c0 = self.params["beta"], self.params["c0"]
        t0 = math.exp(-c0)
        inner = np.maximum(-np.log(np.minimum(t, t0)), c0) ** (-beta)
        v0 = c0 ** (-beta)
        slope = beta * c0 ** (-beta - 1) / t0
        return self.scale * np.where(t <= t0, inner, v0 + slope * (t - t0))

    def eval_log(self, u):
        """omega(exp(u)), accurate for very negative u where exp(u) underflows."""
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == "power":
            out = self.scale * np.exp(self.params["alpha"] * u)
        elif k == "log_power":
            beta, c0 = self.params["beta"], self.params["c0"]
            deep = self.scale * np.maximum(-u, c0) ** (-beta)
            out = np.where(u <= -c0, deep, self._raw(np.exp(np.maximum(u, -c0))))
        else:
            out = self._raw(np.exp(u))
        return float(out) if out.ndim == 0 else out

    # ---- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        d = {"kind": self.kind, "params": dict(self.params),
             "t_max": self.t_max if math.isfinite(self.t_max) else "inf", "scale": self.scale}
        if self.kind == "table":
            d["table"] = [[float(a), float(b)] for a, b in zip(self.ts, self.ws)]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Modulus":
        kind = d.get("kind")
        if kind not in KINDS:
            raise ValidationError(f"unknown modulus kind {kind!r}")
        t_max = float(d.get("t_max", 1.0))
        p = d.get("params", {})
        if kind == "power":
            return cls.power(p["alpha"], t_max, d.get("scale", 1.0))
        if kind == "log_power":
            return cls.log_power(p["beta"], t_max, d.get("scale", 1.0), cutoff=math.exp(-p["c0"]) if "c0" in p else None)
        if kind == "linear":
            return cls.linear(p["slope"], t_max)
        tab = np.asarray(d["table"], dtype=float)
        return cls.table(tab[:, 0], tab[:, 1], t_max)

    def __repr__(self):
        if self.kind == "table":
            return f"Modulus(table, {len(self.ts)} pts, t_max={self.t_max})"
        return f"Modulus({self.kind}, {self.params}, t_max={self.t_max}, scale={self.scale})"


# ---------------------------------------------------------------------------
# dyadic block summation

@dataclass
class BlockSum:
    value: float
    finite: bool
    blocks: list
    tail: float = 0.0


def _blocked_sum(block, tol: float, jmax: int = 1000, min_div: int = 10,
                 bound: float = 1e12, relative: bool = False) -> BlockSum:
    """Sum block(0) + block(1) + ... with a geometric-tail stopping rule.

    Stops as finite once two consecutive block ratios sit below 1 - ETA and
    the geometric tail estimate drops under tol. Declares divergence when the
    last four ratios all sit at or above 1 - ETA (from block min_div on), or
    when the partial sum passes `bound`.
    """
    total = 0.0
    hist: list = []
    for j in range(jmax):
        b = float(block(j))
        hist.append(b)
        total += b
        if total > bound:
            return BlockSum(math.inf, False, hist)
        if j < 3:
            continue
        if b == 0.0:
            return BlockSum(total, True, hist)
        r = b / hist[-2] if hist[-2] > 0 else math.inf
        r_prev = hist[-2] / hist[-3] if hist[-3] > 0 else math.inf
        if r < 1 - ETA and r_prev < 1 - ETA:
            tail = b * r / (1 - r)
            if tail < (tol * total if relative else tol):
                return BlockSum(total + tail, True, hist, tail)
        if j >= min_div:
            ratios = [hist[i] / hist[i - 1] if hist[i - 1] > 0 else math.inf for i in range(j - 3, j + 1)]
            if all(q >= 1 - ETA for q in ratios):
                return BlockSum(math.inf, False, hist)
    return BlockSum(math.inf, False, hist)


def _log_integral(m: Modulus, upper: float, tol: float, relative: bool = False) -> BlockSum:
    """int_{-inf}^{upper} omega(e^u) du, i.e. int_0^{e^upper} omega(t)/t dt."""
    kink = -m.params["c0"] if m.kind == "log_power" else None
    if m.kind == "table":
        # integrand is exactly linear in t below the first sample
        return _table_log_integral(m, upper)

    def block(j):
        if j == 0:
            a, b = upper - 1.0, upper
        else:
            a, b = upper - 2.0 ** j, upper - 2.0 ** (j - 1)
        pts = [kink] if kink is not None and a < kink < b else None
        val, _ = integrate.quad(m.eval_log, a, b, epsabs=0.0 if relative else tol * 1e-3,
                                epsrel=1e-12, limit=200, points=pts)
        return val

    return _blocked_sum(block, tol, relative=relative)


def _table_log_integral(m: Modulus, upper: float) -> BlockSum:
    # omega is piecewise linear: on [t_i, t_{i+1}] omega(t)/t = s + (w_i - s t_i)/t
    t_hi = math.exp(upper)
    ts, ws = m.ts, m.ws
    total = 0.0
    for i in range(len(ts) - 1):
        a, b = ts[i], min(ts[i + 1], t_hi)
        if a >= b:
            break
        s = (ws[i + 1] - ws[i]) / (ts[i + 1] - ts[i])
        c = ws[i] - s * ts[i]
        total += s * (b - a) + (c * math.log(b / a) if a > 0 else 0.0)
    if t_hi > ts[-1]:
        total += ws[-1] * math.log(t_hi / ts[-1])
    return BlockSum(total, True, [total])


# ---------------------------------------------------------------------------
# public operations

@dataclass
class DiniReport:
    summable: bool
    integral_estimate: float
    upper: float
    tol: float
    series_estimates: dict = field(default_factory=dict)
    blocks: list = field(default_factory=list)

    def series_estimate(self, c: float) -> float:
        return self.series_estimates[c]


def dini_test(m: Modulus, tol: float = 1e-8, cs: Iterable[float] = ()) -> DiniReport:
    """Decide whether int_0^1 omega(t)/t dt is finite.

    The integral runs up to min(1, t_max). `cs` requests the series
    omega-tilde_c(1) alongside; divergent series are reported as inf.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    upper = min(1.0, m.t_max)
    res = _log_integral(m, math.log(upper), tol)
    series = {}
    for c in cs:
        try:
            series[c] = tilde_series(m, c, upper, tol)
        except NonDiniError:
            series[c] = math.inf
    return DiniReport(res.finite, res.value, upper, tol, series, res.blocks)


def tilde_integral(m: Modulus, t, tol: float = 1e-10):
    """omega-tilde(t) = int_0^t omega(s)/s ds, tol relative. Raises NonDiniError if infinite."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    m._check(ts)
    out = np.zeros_like(ts)
    for i, ti in enumerate(ts):
        if ti == 0:
            continue
        res = _log_integral(m, math.log(ti), tol, relative=True)
        if not res.finite:
            raise NonDiniError(f"int_0^t omega(s)/s ds diverges for {m!r}")
        out[i] = res.value
    return float(out[0]) if np.ndim(t) == 0 else out


def tilde_series(m: Modulus, c: float, t: float, tol: float = 1e-10) -> float:
    """omega-tilde_c(t) = sum_k omega(c^k t), tol relative. Raises NonDiniError on divergence."""
    if not 0 < c < 1:
        raise ValidationError("c must lie in (0, 1)")
    m._check(t)
    if t == 0:
        return 0.0
    lt, lc = math.log(t), math.log(c)

    def f(k):
        return m.eval_log(lt + np.asarray(k, dtype=float) * lc)

    def block(j):
        if j == 0:
            return f(0)
        a, b = 1 << (j - 1), 1 << j
        if b - a <= _DIRECT_TERMS:
            return float(np.sum(f(np.arange(a, b))))
        # midpoint rule over a slowly varying monotone summand
        val, _ = integrate.quad(lambda x: float(f(x)), a - 0.5, b - 0.5, epsrel=1e-12, limit=200)
        return val

    res = _blocked_sum(block, tol, relative=True)
    if not res.finite:
        raise NonDiniError(f"series sum_k omega(c^k t) diverges for {m!r}")
    return res.value


def equivalence_check(m: Modulus, c: float, grid: Sequence[float], tol: float = 1e-10) -> float:
    """Smallest C with omega-tilde_c / C <= omega-tilde <= C omega-tilde_c on grid."""
    grid = [float(t) for t in grid if t > 0]
    if not grid:
        raise ValidationError("grid needs at least one positive point")
    ratios = []
    for t in grid:
        a = tilde_integral(m, t, tol)
        b = tilde_series(m, c, t, tol)
        ratios.append(a / b)
    r = np.asarray(ratios)
    C = float(max(r.max(), (1.0 / r).max()))
    if not math.isfinite(C):
        raise NonDiniError("unbounded ratio between omega-tilde and omega-tilde_c")
    return C


def sandwich(m: Modulus, c: float, t: float, n: int) -> dict:
    """Bracket int_{c^n t}^t omega(s)/s ds by partial sums of omega(c^k t).

    By concavity omega(s)/s is non-increasing, which gives
    (1-c) sum_{k<n} omega(c^k t) <= I_n <= (1-c)/c sum_{k<n} omega(c^{k+1} t).
    """
    lt, lc = math.log(t), math.log(c)
    kink = -m.params["c0"] if m.kind == "log_power" else None
    a, b = lt + n * lc, lt
    pts = [kink] if kink is not None and a < kink < b else None
    integral, _ = integrate.quad(m.eval_log, a, b, epsabs=1e-14, epsrel=1e-12, limit=400, points=pts)
    k = np.arange(n)
    terms = m.eval_log(lt + k * lc)
    terms_next = m.eval_log(lt + (k + 1) * lc)
    return {"lower": (1 - c) * float(np.sum(terms)), "integral": integral,
            "upper": (1 - c) / c * float(np.sum(terms_next))}


def empirical_modulus(pairs, ratio: float = 1.25, t_max: float = math.inf) -> Modulus:
    """Least concave majorant of binned sup gaps.

    pairs: iterable of (distance, value_gap). Distances are grouped in
    geometric bins [d0 r^k, d0 r^(k+1)) with d0 the smallest distance; each
    bin is represented by its largest distance and largest gap. The running
    max of these points is wrapped by its upper concave hull from (0, 0).
    Every input then satisfies omega(min(ratio * d_i, t_max)) >= gap_i.
    """
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=float)
    if arr.size == 0:
        raise ValidationError("empirical_modulus needs at least one pair")
    arr = arr.reshape(-1, 2)
    if arr.shape[0] < 2:
        raise ValidationError("empirical_modulus needs at least 2 pairs")
    d, g = arr[:, 0], np.abs(arr[:, 1])
    if np.any(d <= 0):
        raise ValidationError("distances must be positive")
    d0 = d.min()
    idx = np.floor(np.log(d / d0) / math.log(ratio) + 1e-12).astype(np.int64)
    order = np.argsort(idx, kind="stable")
    idx, d, g = idx[order], d[order], g[order]
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    bx = np.maximum.reduceat(d, starts)
    by = np.maximum.accumulate(np.maximum.reduceat(g, starts))
    hx, hy = _upper_hull(np.r_[0.0, bx], np.r_[0.0, by])
    return Modulus.table(hx, hy, t_max=t_max)


def _upper_hull(x, y):
    hx, hy = [x[0]], [y[0]]
    for xi, yi in zip(x[1:], y[1:]):
        while len(hx) >= 2:
            # drop the middle point if it lies on or below the chord
            x1, y1, x2, y2 = hx[-2], hy[-2], hx[-1], hy[-1]
            if (y2 - y1) * (xi - x1) <= (yi - y1) * (x2 - x1):
                hx.pop()
                hy.pop()
            else:
                break
        hx.append(xi)
        hy.append(yi)
    return np.asarray(hx), np.asarray(hy)


def pairs_from_samples(xs, values, max_pairs: int | None = None):
    """All pairs (|x_i - x_j|, |v_i - v_j|) with x_i != x_j, for 1-d samples."""
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(values, dtype=float)
    i, j = np.triu_indices(len(xs), k=1)
    if max_pairs is not None and len(i) > max_pairs:
        i, j = i[:max_pairs], j[:max_pairs]
    d = np.abs(xs[i] - xs[j])
    keep = d > 0
    return np.column_stack([d[keep], np.abs(vs[i] - vs[j])[keep]])


def domination_constant(m: Modulus, ref: Modulus, ts) -> float:
    """Fitted C = max over ts of m(t)/ref(t): the multiple of ref that dominates m."""
    ts = np.asarray([t for t in ts if t > 0], dtype=float)
    return float(np.max(m.eval(ts) / ref.eval(ts)))
