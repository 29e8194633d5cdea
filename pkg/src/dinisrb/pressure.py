"""Pressure from orbit data: Bowen metric, separated sets, Bowen-ball volume.

Separated sets are built greedily from a finite candidate cloud, visiting
candidates in a seeded random order. A candidate is rejected when some
already chosen point is within eps in d_n; because d_n <= eps forces the
endpoints x, f^(n-1) x to be within eps as well, neighbours are prefiltered
with a KD-tree on the pair (x, f^(n-1) x) before the full orbit check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from . import rng as krng
from .errors import ValidationError
from .grassmann import GeometricPotential, unstable_jacobian
from .systems import SmoothSystem, orbit

SATURATION_RATIO = 8.0


@dataclass(frozen=True)
class DynMetricContext:
    system: SmoothSystem
    n: int
    epsilon: float

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")


def dyn_distance(ctx: DynMetricContext, x, y) -> np.ndarray:
    """d_n(x, y) = max_{k<n} d(f^k x, f^k y); broadcasts over leading axes."""
    s = ctx.system
    ox, oy = orbit(s, x, ctx.n - 1), orbit(s, y, ctx.n - 1)
    return np.max(s.metric(ox, oy), axis=0)


def _orbit_stack(s: SmoothSystem, X, n):
    return orbit(s, X, n - 1)  # (n, N, 2)


@dataclass
class SeparatedSet:
    indices: np.ndarray
    points: np.ndarray
    spanning: bool
    n: int
    epsilon: float

    def __len__(self):
        return len(self.indices)


def _greedy(s: SmoothSystem, orb, eps, order, initial=None):
    n, N = orb.shape[0], orb.shape[1]
    F = np.concatenate([orb[0], orb[-1]], axis=1)
    if s.torus:
        tree = cKDTree(np.mod(F, 1.0), boxsize=1.0)
    else:
        tree = cKDTree(F)
    blocked = np.zeros(N, bool)
    chosen = []

    def take(i):
        chosen.append(i)
        nb = np.asarray(tree.query_ball_point(F[i], eps * (1 + 1e-12), p=np.inf), dtype=np.int64)
        d = np.max(s.metric(orb[:, nb], orb[:, i:i + 1]), axis=0)
        blocked[nb[d <= eps]] = True

    if initial is not None:
        for i in initial:
            take(int(i))
    for i in order:
        if not blocked[i]:
            take(int(i))
    return np.asarray(chosen, dtype=np.int64), bool(blocked.all())


def separated_set(ctx: DynMetricContext, candidates, seed: int = 0, initial=None, orb=None) -> SeparatedSet:
    """Greedy maximal (n, eps)-separated subset of the candidates.

    Also certifies that the result is (n, eps)-spanning for the cloud: every
    candidate is within eps in d_n of a chosen point. `initial` indices are
    placed first (they must be separated at this eps), which gives nested
    sets along a decreasing eps ladder.
    """
    X = np.atleast_2d(np.asarray(candidates, float))
    s = ctx.system
    if orb is None:
        orb = _orbit_stack(s, X, ctx.n)
    order = krng.permutation(seed, krng.STREAM_GREEDY, X.shape[0])
    idx, spanning = _greedy(s, orb, ctx.epsilon, order, initial)
    return SeparatedSet(idx, X[idx], spanning, ctx.n, ctx.epsilon)


# ---------------------------------------------------------------------------
# potentials on orbit data

class ConstantPotential:
    def __init__(self, c: float = 0.0):
        self.c = float(c)
        self.name = f"constant({self.c})"

    def __call__(self, X):
        return np.full(np.shape(X)[0], self.c)

    def birkhoff_sums(self, X, n_max):
        N = np.shape(X)[0]
        return self.c * np.arange(n_max + 1)[:, None] * np.ones((1, N))


class ShiftedPotential:
    def __init__(self, base, c: float):
        self.base, self.c = base, float(c)
        self.name = f"{getattr(base, 'name', 'potential')}{self.c:+g}"

    def __call__(self, X):
        return self.base(X) + self.c

    def birkhoff_sums(self, X, n_max):
        return birkhoff_sums(self.base, None, X, n_max) + self.c * np.arange(n_max + 1)[:, None]


def birkhoff_sums(potential, s: SmoothSystem | None, X, n_max: int) -> np.ndarray:
    """S_n phi at each row of X for n = 0..n_max, shape (n_max+1, N)."""
    if hasattr(potential, "birkhoff_sums"):
        return potential.birkhoff_sums(X, n_max)
    if s is None:
        raise ValidationError("a system is needed to iterate a plain callable potential")
    orb = orbit(s, X, max(n_max - 1, 0))
    vals = np.stack([np.asarray(potential(o), float) for o in orb[:n_max]])
    return np.concatenate([np.zeros((1, vals.shape[1])), np.cumsum(vals, axis=0)])


# ---------------------------------------------------------------------------
# pressure estimate

@dataclass
class PressureEstimate:
    per_n: list                 # (n, (1/n) log P_n) at the smallest eps
    extrapolated: float
    epsilon_used: float
    sample_size: int
    method: str
    rows: list = field(default_factory=list)
    quartile_mean: float = math.nan
    increment_estimate: float = math.nan
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"per_n": [[int(n), float(v)] for n, v in self.per_n],
                "extrapolated": self.extrapolated, "epsilon_used": self.epsilon_used,
                "sample_size": self.sample_size, "method": self.method,
                "quartile_mean": self.quartile_mean, "increment_estimate": self.increment_estimate,
                "warnings": list(self.warnings)}


def _top_quartile(values):
    v = list(values)
    if not v:
        return []
    k = max(1, int(math.ceil(len(v) / 4)))
    return v[-k:]


def separated_ladder(s: SmoothSystem, candidates, eps_list, n_list, seed: int = 0):
    """Separated sets for every (eps, n), nested in eps (largest eps first).

    Once every candidate is chosen at some n the same holds for all larger n
    (d_n only grows), so those sets are filled in without recomputation.
    """
    X = np.atleast_2d(np.asarray(candidates, float))
    eps_sorted = sorted(set(float(e) for e in eps_list), reverse=True)
    ns = sorted(set(int(n) for n in n_list))
    if not ns or ns[0] < 1:
        raise ValidationError("n_list must contain integers >= 1")
    full = orbit(s, X, ns[-1] - 1)
    out = {}
    for n in ns:
        prev = None
        for eps in eps_sorted:
            key_prev = out.get((eps, ns[ns.index(n) - 1])) if ns.index(n) > 0 else None
            if key_prev is not None and len(key_prev) == X.shape[0]:
                out[(eps, n)] = SeparatedSet(key_prev.indices, key_prev.points, True, n, eps)
            else:
                ctx = DynMetricContext(s, n, eps)
                out[(eps, n)] = separated_set(ctx, X, seed, None if prev is None else prev.indices, full[:n])
            prev = out[(eps, n)]
    return out


def pressure_estimate(s: SmoothSystem, potential, eps_list, n_list, candidates, seed: int = 0,
                      method: str = "increment", ladder=None) -> PressureEstimate:
    """Estimate P(phi) from separated sets on a candidate cloud.

    For each (eps, n) row: log P_n = log sum_{x in S} exp(S_n phi(x)).
    Rows where the cloud holds fewer than SATURATION_RATIO candidates per
    chosen point are flagged saturated (the cloud no longer resolves
    d_n-balls). Two extrapolations at the smallest eps are reported:

    * quartile_mean: mean of (1/n) log P_n over the top quartile of n;
    * increment: mean of log P_{n+1} - log P_n over the top quartile of
      consecutive unsaturated rows, which removes the log C(eps) / n bias.

    `method` picks which one is returned as `extrapolated`.
    """
    if method not in ("increment", "quartile"):
        raise ValidationError("method must be 'increment' or 'quartile'")
    X = np.atleast_2d(np.asarray(candidates, float))
    N = X.shape[0]
    ns = sorted(set(int(n) for n in n_list))
    if ladder is None:
        ladder = separated_ladder(s, X, eps_list, ns, seed)
    S_all = birkhoff_sums(potential, s, X, ns[-1])
    rows = []
    for eps in sorted(set(float(e) for e in eps_list), reverse=True):
        for n in ns:
            S = ladder[(eps, n)]
            logP = float(logsumexp(S_all[n, S.indices]))
            ratio = N / len(S)
            rows.append({"n": n, "epsilon": eps, "size": len(S), "log_P": logP, "rate": logP / n,
                         "saturation_ratio": ratio, "saturated": ratio < SATURATION_RATIO,
                         "spanning": S.spanning})
    eps0 = min(float(e) for e in eps_list)
    mine = [r for r in rows if r["epsilon"] == eps0]
    per_n = [(r["n"], r["rate"]) for r in mine]
    qm = float(np.mean([v for _, v in _top_quartile(per_n)]))
    incs = []
    for a, b in zip(mine, mine[1:]):
        if b["n"] == a["n"] + 1 and not a["saturated"] and not b["saturated"]:
            incs.append(b["log_P"] - a["log_P"])
    inc = float(np.mean(_top_quartile(incs))) if incs else math.nan
    notes = []
    for a, b in zip(mine, mine[1:]):
        if not b["saturated"] and b["rate"] > a["rate"] + 0.05:
            notes.append(f"(1/n) log P_n increases from n={a['n']} to n={b['n']}")
    if not incs:
        notes.append("no consecutive unsaturated rows; increment estimate unavailable")
    for w in notes:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    est = inc if method == "increment" else qm
    return PressureEstimate(per_n, est, eps0, N, method, rows, qm, inc, notes)


def grid_candidates(resolution: int, jitter_seed: int | None = None) -> np.ndarray:
    """Cell-centred grid on the unit torus, optionally jittered inside cells."""
    g = (np.arange(resolution) + 0.5) / resolution
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    if jitter_seed is not None:
        X = X + (krng.uniform(jitter_seed, krng.STREAM_PRESSURE, 0, X.shape[0]) - 0.5) / resolution
    return X


# ---------------------------------------------------------------------------
# Bowen-ball volume

@dataclass
class VolumeEstimate:
    estimate: float
    stderr: float
    hits: int
    samples: int
    below_resolution: bool
    cube_volume: float

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "hits": self.hits,
                "samples": self.samples, "below_resolution": self.below_resolution}


def bowen_ball_volume(s: SmoothSystem, x, n: int, eps: float, samples: int, seed: int = 0,
                      cube_radius: float | None = None, chunk: int = 1 << 15) -> VolumeEstimate:
    """Monte-Carlo volume of {y in cube(x, r) : d_n(x, y) <= eps}.

    Samples are addressed by (seed, index) so any chunking gives the same
    result. With zero hits the estimate is the rule-of-three upper bound
    3/samples times the cube volume, flagged below_resolution.
    """
    if samples < 1000:
        raise ValidationError("need at least 1000 samples")
    ctx = DynMetricContext(s, n, eps)
    r = eps if cube_radius is None else float(cube_radius)
    x = s.reduce(np.asarray(x, float))
    ox = orbit(s, x, n - 1)
    hits = 0
    for start in range(0, samples, chunk):
        cnt = min(chunk, samples - start)
        U = krng.uniform(seed, krng.STREAM_VOLUME, start, cnt)
        Y = s.reduce(x + r * (2 * U - 1))
        d = np.zeros(cnt)
        y = Y
        for k in range(ctx.n):
            d = np.maximum(d, s.metric(ox[k], y))
            if k + 1 < ctx.n:
                y = s.apply(y)
        hits += int(np.count_nonzero(d <= eps))
    cube = (2 * r) ** 2
    p = hits / samples
    if hits == 0:
        return VolumeEstimate(3.0 / samples * cube, math.nan, 0, samples, True, cube)
    return VolumeEstimate(p * cube, math.sqrt(p * (1 - p) / samples) * cube, hits, samples, False, cube)


def linear_bowen_area(M, n: int, eps: float) -> float:
    """Exact area of {v : |M^k v| <= eps, k < n} by polar quadrature.

    The set is an intersection of centred ellipses, star-shaped with radius
    r(theta) = eps / max_k |M^k u(theta)|; breakpoints where the active
    ellipse changes are located on a fine grid and refined by quad.
    """
    M = np.asarray(M, float)
    P = [np.linalg.matrix_power(M, k) for k in range(n)]

    def rmax(th):
        u = np.array([np.cos(th), np.sin(th)])
        return max(np.linalg.norm(Pk @ u) for Pk in P)

    grid = np.linspace(0, np.pi, 20001)
    U = np.stack([np.cos(grid), np.sin(grid)])
    norms = np.stack([np.linalg.norm(Pk @ U, axis=0) for Pk in P])
    act = np.argmax(norms, axis=0)
    brk = list(grid[1:][np.diff(act) != 0])
    f = lambda th: 0.5 * (eps / rmax(th)) ** 2
    pts = [0.0] + brk + [np.pi]
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        total += integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0]
    return 2 * total  # theta and theta + pi give the same radius


def volume_plateau(s: SmoothSystem, x, ns, eps: float, samples: int, seed: int = 0) -> dict:
    """vol(B_n(x, eps)) * J^u f^n(x) across n; max/min ratio of the products."""
    out = []
    for n in ns:
        v = bowen_ball_volume(s, x, n, eps, samples, seed)
        J = unstable_jacobian(s, x, n)
        out.append({"n": int(n), "volume": v.estimate, "stderr": v.stderr, "hits": v.hits,
                    "below_resolution": v.below_resolution, "jacobian": J, "product": v.estimate * J})
    prods = np.array([r["product"] for r in out])
    return {"rows": out, "ratio": float(prods.max() / prods.min()),
            "any_below_resolution": any(r["below_resolution"] for r in out)}


# ---------------------------------------------------------------------------
# attractor criterion

def attractor_criterion(s: SmoothSystem, candidates, config: dict | None = None) -> dict:
    """P(phi^u) from separated sets and the verdict |P| < threshold.

    config keys: eps_list, n_list, threshold, seed, method, shift (added to
    phi^u, e.g. -0.5 for the rejection check).
    """
    cfg = {"eps_list": [0.02], "n_list": list(range(1, 13)), "threshold": 0.1, "seed": 0,
           "method": "increment", "shift": 0.0}
    cfg.update(config or {})
    pot = GeometricPotential(s, shift=cfg["shift"])
    est = pressure_estimate(s, pot, cfg["eps_list"], cfg["n_list"], candidates, cfg["seed"], cfg["method"])
    ok = bool(abs(est.extrapolated) < cfg["threshold"])
    return {"pressure": est.extrapolated, "estimate": est, "threshold": cfg["threshold"],
            "consistent_with_attractor": ok,
            "verdict": "consistent with attractor" if ok else "not consistent with attractor"}
