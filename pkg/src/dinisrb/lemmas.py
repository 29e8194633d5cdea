"""Randomised checks of the graph-map estimates and the regularity bounds.

Each check returns a LemmaReport with the number of samples, the constants
it fitted, and the worst violation (<= 0 means the inequality held on every
sample, measured as lhs - rhs relative to rhs).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as krng
from .errors import BowenBallError, ValidationError
from .grassmann import (
    GeometricPotential, LeafShooter, bracket, graph_coordinate, splitting_batch,
)
from .modulus import Modulus, empirical_modulus
from .systems import CAT, SmoothSystem, cat_eigenvectors, make_cat_map, orbit


@dataclass
class LemmaReport:
    lemma: str
    samples: int
    fitted_constants: dict
    max_violation: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"lemma": self.lemma, "samples": self.samples,
                "fitted_constants": self.fitted_constants,
                "max_violation": self.max_violation, "passed": self.passed}


def _uniform(seed, n, dim, stream=krng.STREAM_LEMMA):
    return krng.uniform(seed, stream, 0, n, dim)


def _rot(v, ang):
    c, s = np.cos(ang), np.sin(ang)
    return np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], axis=-1)


def lemma1_check(n_pairs: int = 1000, seed: int = 0, M=CAT, spread: float = 0.5) -> LemmaReport:
    """Graph distance of df E, df F over that of E, F, for lines near E^u.

    The bound compared against is |A|_{E^s}| |A^{-1}|_{E^u}|, which is what
    the proof produces; for the cat map it equals lambda_+^-2.
    """
    M = np.asarray(M, float)
    w, V = np.linalg.eig(M)
    iu = int(np.argmax(np.abs(w)))
    u, s = np.real(V[:, iu]), np.real(V[:, 1 - iu])
    u, s = u / np.linalg.norm(u), s / np.linalg.norm(s)
    bound = abs(w[1 - iu]) / abs(w[iu])
    U = _uniform(seed, n_pairs, 2)
    L = spread * (2 * U - 1)
    E = u + L[:, :1] * s
    F = u + L[:, 1:] * s
    d0 = np.abs(L[:, 0] - L[:, 1])
    AE, AF = E @ M.T, F @ M.T
    Au, As = M @ u, M @ s
    Au, As = Au / np.linalg.norm(Au), As / np.linalg.norm(As)
    d1 = np.abs(graph_coordinate(AE, Au, As) - graph_coordinate(AF, Au, As))
    keep = d0 > 0
    ratio = d1[keep] / d0[keep]
    viol = float(np.max(ratio - bound))
    return LemmaReport("1", int(keep.sum()), {"bound": float(bound), "max_ratio": float(ratio.max())},
                       viol, viol <= 1e-12)


def lemma2_check(n_samples: int = 1000, eps_max: float = 0.05, seed: int = 0) -> LemmaReport:
    """d(B E^u, E^u) <= eps for random B with |A - B| <= eps (cat map A)."""
    if eps_max > 0.05:
        raise ValidationError("eps_max must be <= 0.05")
    u, s = cat_eigenvectors()
    U = _uniform(seed, n_samples, 5)
    eps = eps_max * np.maximum(U[:, 0], 1e-6)
    P = 2 * U[:, 1:].reshape(-1, 2, 2) - 1
    P /= np.linalg.norm(P, ord=2, axis=(1, 2))[:, None, None]
    B = CAT + eps[:, None, None] * P
    Bu = np.einsum("nij,j->ni", B, u)
    d = np.abs(graph_coordinate(Bu, u, s))
    ratio = d / eps
    viol = float(np.max(ratio - 1.0))
    return LemmaReport("2", n_samples, {"max_ratio": float(ratio.max())}, viol, viol <= 0)


def lemma3_check(eps_list=(0.1, 0.05, 0.01), n_samples: int = 1000, seed: int = 0,
                 spread: float = 0.3) -> LemmaReport:
    """Distances in a frame rotated by O(eps) agree within a factor delta(eps).

    The same random draws are reused for every eps so delta(eps) is compared
    on common samples; monotone decrease towards 1 is required.
    """
    u, s = cat_eigenvectors()
    U = _uniform(seed, n_samples, 4)
    L = spread * (2 * U[:, :2] - 1)
    th = 2 * U[:, 2:] - 1
    E = u + L[:, :1] * s
    F = u + L[:, 1:] * s
    d = np.abs(L[:, 0] - L[:, 1])
    keep = d > 1e-12
    deltas = {}
    for eps in sorted(eps_list, reverse=True):
        u0 = _rot(np.broadcast_to(u, (n_samples, 2)), eps * th[:, 0])
        s0 = _rot(np.broadcast_to(s, (n_samples, 2)), eps * th[:, 1])
        d0 = np.abs(graph_coordinate(E, u0, s0) - graph_coordinate(F, u0, s0))
        r = d0[keep] / d[keep]
        deltas[eps] = float(np.max(np.maximum(r, 1 / r)))
    seq = [deltas[e] for e in sorted(deltas, reverse=True)]
    monotone = all(a > b for a, b in zip(seq, seq[1:]))
    # slope of delta - 1 against eps: delta should tend to 1 linearly
    viol = 0.0 if monotone else max(b - a for a, b in zip(seq, seq[1:]))
    return LemmaReport("3", int(keep.sum()), {"delta": {str(k): v for k, v in deltas.items()}},
                       viol, monotone and seq[-1] < seq[0])


def _stable_pairs(s: SmoothSystem, n: int, seed: int, t_range=(1e-3, 0.05)):
    U = _uniform(seed, n, 3)
    X = U[:, :2]
    t = t_range[0] + (t_range[1] - t_range[0]) * U[:, 2]
    if s.name in ("cat-map",):
        _, es = cat_eigenvectors()
        Y = s.reduce(X + t[:, None] * es)
    else:
        Y = LeafShooter(s, X, True).points(t[:, None])[:, 0]
    return X, Y, U


def lemma4_check(s: SmoothSystem | None = None, omega: Modulus | None = None, n_samples: int = 1000,
                 n_max: int = 10, seed: int = 0) -> LemmaReport:
    """sum_{k<n} c^(n-k) omega(d_k) <= c/(lam-c) omega(lam^n d_0) on stable-leaf pairs.

    d_k are measured orbit distances; lam is fitted per pair as the upper
    envelope max_k (d_k/d_0)^(1/k), and c is drawn in (0, lam).
    """
    s = make_cat_map() if s is None else s
    omega = Modulus.log_power(2.0) if omega is None else omega
    X, Y, U = _stable_pairs(s, n_samples, seed)
    ox, oy = orbit(s, X, n_max), orbit(s, Y, n_max)
    d = s.metric(ox, oy)  # (n_max+1, N)
    if np.any(d[1:] > d[0] * 1.01):
        raise BowenBallError("leaf samples separate under forward iteration")
    V = _uniform(seed + 1, n_samples, 2)
    n = 1 + np.floor(V[:, 0] * n_max).astype(int)
    k = np.arange(1, n_max + 1)[:, None]
    lam = np.max((d[1:] / d[0]) ** (1.0 / k), axis=0)
    c = lam * (0.05 + 0.9 * V[:, 1])
    worst, lam_seen = -math.inf, []
    for i in range(n_samples):
        ni = n[i]
        ks = np.arange(ni)
        lhs = float(np.sum(c[i] ** (ni - ks) * omega.eval(np.minimum(d[:ni, i], omega.t_max))))
        rhs = c[i] / (lam[i] - c[i]) * omega.eval(min(lam[i] ** ni * d[0, i], omega.t_max))
        worst = max(worst, (lhs - rhs) / rhs)
        lam_seen.append(lam[i])
    return LemmaReport("4", n_samples, {"lambda_max": float(np.max(lam_seen)),
                                        "lambda_min": float(np.min(lam_seen))},
                       worst, worst <= 1e-9)


def lemma5_check(s: SmoothSystem, n_leaves: int = 40, n_pairs: int = 100, leaf_eps: float = 0.03,
                 pair_eps: float = 0.01, seed: int = 0) -> LemmaReport:
    """|g x - g y| <= 2 omega(K d(x, y)) for g = phi^u via the bracket.

    omega is fitted on separate stable and unstable leaf samples; K is the
    largest ratio max(d(x,[x,y]), d([x,y],y)) / d(x,y) on the test pairs.
    """
    g = GeometricPotential(s)
    B = _uniform(seed, n_leaves, 2)
    ts = np.linspace(-leaf_eps, leaf_eps, 21)
    pairs = []
    for forward in (True, False):
        P = LeafShooter(s, B, forward).points(ts)  # (n_leaves, T, 2)
        vals = g(P.reshape(-1, 2)).reshape(P.shape[:2])
        i, j = np.triu_indices(len(ts), k=1)
        dd = s.metric(P[:, i], P[:, j]).ravel()
        gg = np.abs(vals[:, i] - vals[:, j]).ravel()
        pairs.append(np.column_stack([dd, gg]))
    omega = empirical_modulus(np.concatenate(pairs))

    U = _uniform(seed + 7, n_pairs, 4)
    X = U[:, :2]
    off = pair_eps * (2 * U[:, 2:] - 1)
    Y = s.reduce(X + off)
    Z, _, _ = bracket(s, X, Y)
    dxy = s.metric(X, Y)
    K = float(np.max(np.maximum(s.metric(X, Z), s.metric(Z, Y)) / dxy))
    gx, gy, gz = g(X), g(Y), g(Z)
    leaf_ok = float(np.mean((np.abs(gx - gz) <= omega.eval(np.minimum(1.25 * s.metric(X, Z), omega.t_max)) + 1e-15)
                            & (np.abs(gz - gy) <= omega.eval(np.minimum(1.25 * s.metric(Z, Y), omega.t_max)) + 1e-15)))
    rhs = 2 * omega.eval(np.minimum(K * dxy, omega.t_max))
    lhs = np.abs(gx - gy)
    viol = float(np.max((lhs - rhs) / rhs))
    return LemmaReport("5", n_pairs, {"K": K, "omega_points": int(len(omega.ts))}, viol, viol <= 0,
                       {"leaf_modulus_fraction": leaf_ok, "omega": omega})


def verify_main_inequality(s: SmoothSystem, x0, leaf_samples, n_max: int = 8, n_iter: int = 40) -> dict:
    """Fit constants in D_n <= M1 lam^(2n) D_0 + M2 omega(M3 lam^n d_0).

    D_n = graph distance of E^u at f^n y from E^u at f^n x0 (frame at f^n x0),
    d_0 = d(x0, y). M1 = M3 = 1 and delta = 1 are fixed; lam is the largest
    one-step stable contraction seen along the orbit of x0; M2 is the
    smallest value making every row hold. omega is the declared modulus of df.
    The rate is exp(slope) of log D_n over the rows above the noise floor.
    """
    x0 = s.reduce(np.asarray(x0, float))
    Y = np.atleast_2d(np.asarray(leaf_samples, float))
    ox, oy = orbit(s, x0, n_max), orbit(s, Y, n_max)
    dist = s.metric(ox[:, None, :], oy)  # (n_max+1, N)
    if np.any(dist[1:] > 1.01 * dist[0]):
        raise BowenBallError("samples are not on the local stable leaf of x0 (orbits separate)")
    # rows past the point where the sampled leaf stops contracting are below
    # double-precision resolution of the leaf itself and are dropped
    grow = np.flatnonzero(np.any(dist[1:] > dist[:-1], axis=1))
    n_eff = int(grow[0]) if grow.size else n_max
    ox, oy, dist = ox[:n_eff + 1], oy[:n_eff + 1], dist[:n_eff + 1]
    eux, esx, _, _ = splitting_batch(s, ox, n_iter)
    euy, _, _, _ = splitting_batch(s, oy.reshape(-1, 2), n_iter)
    euy = euy.reshape(oy.shape)
    D = np.abs(graph_coordinate(euy, eux[:, None, :], esx[:, None, :]))  # (n_max+1, N)
    # uniform contraction bound along the orbit
    Ds = np.einsum("nij,nj->ni", s.differential(ox), esx)
    lam = float(np.max(np.linalg.norm(Ds, axis=1)))
    omega = s.modulus_of_df
    ns = np.arange(n_eff + 1)[:, None]
    first = lam ** (2 * ns) * D[0]
    w = omega.eval(np.minimum(lam ** ns * dist[0], omega.t_max))
    if np.all(w == 0):
        M2 = 0.0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(w > 0, (D - first) / w, 0.0)
        M2 = float(max(0.0, np.max(need)))
    floor = 1e-13
    mean_D = np.exp(np.mean(np.log(np.maximum(D, 1e-300)), axis=1))
    rows = np.flatnonzero(mean_D > floor)
    rate = float(math.exp(np.polyfit(rows, np.log(mean_D[rows]), 1)[0])) if rows.size >= 2 else 0.0
    rhs = first + M2 * w
    viol = float(np.max(D - rhs))
    return {"M1": 1.0, "M2": M2, "M3": 1.0, "delta": 1.0, "lambda": lam, "rate": rate,
            "max_violation": viol, "n_effective": n_eff, "D": D, "d": dist}
