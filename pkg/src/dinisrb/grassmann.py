"""Graph-map coordinates for lines in the plane, splittings, the geometric
potential and local stable/unstable leaves.

For q = 1 a line E is the graph of a scalar L over a reference frame
(u, s): E = span(u + L s). The distance between two lines in that frame is
|L_E - L_F|. Reference vectors are normalised per factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BowenBallError, ConvergenceError, TransversalityError, ValidationError
from .systems import SmoothSystem, orbit, torus_diff

TRANSVERSE_EPS = 1e-12


def _unit(v):
    v = np.asarray(v, float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


@dataclass
class Subspace:
    base_point: np.ndarray
    basis: np.ndarray  # (2, 1), orthonormal column

    def __post_init__(self):
        b = np.asarray(self.basis, float).reshape(2, -1)
        if b.shape[1] != 1:
            raise ValidationError("only lines (q = 1) are supported")
        nrm = np.linalg.norm(b[:, 0])
        if nrm == 0:
            raise ValidationError("zero basis vector")
        self.basis = b / nrm
        self.base_point = np.asarray(self.base_point, float)

    @classmethod
    def line(cls, v, base_point=(0.0, 0.0)) -> "Subspace":
        return cls(np.asarray(base_point, float), np.asarray(v, float).reshape(2, 1))

    @property
    def vector(self) -> np.ndarray:
        return self.basis[:, 0]


@dataclass
class Splitting:
    """Reference frame (E_u, E_s) at a point."""
    unstable: Subspace
    stable: Subspace

    @classmethod
    def from_vectors(cls, u, s, base_point=(0.0, 0.0)) -> "Splitting":
        return cls(Subspace.line(u, base_point), Subspace.line(s, base_point))

    def vectors(self):
        return self.unstable.vector, self.stable.vector


@dataclass
class GraphMap:
    reference: Splitting
    L: np.ndarray  # (1, 1)

    def subspace(self) -> Subspace:
        u, s = self.reference.vectors()
        return Subspace.line(u + self.L[0, 0] * s, self.reference.unstable.base_point)


def graph_coordinate(v, u, s):
    """L with v parallel to u + L s; vectorised over leading axes."""
    v, u, s = (np.asarray(a, float) for a in (v, u, s))
    det = u[..., 0] * s[..., 1] - u[..., 1] * s[..., 0]
    a = (v[..., 0] * s[..., 1] - v[..., 1] * s[..., 0]) / det
    b = (u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]) / det
    scale = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(a) <= TRANSVERSE_EPS * scale):
        raise TransversalityError("line is not transverse to the stable reference factor")
    return b / a


def to_graph(E: Subspace, ref: Splitting) -> GraphMap:
    u, s = ref.vectors()
    return GraphMap(ref, np.array([[graph_coordinate(E.vector, u, s)]]))


def graph_distance(E: Subspace, F: Subspace, ref: Splitting) -> float:
    u, s = ref.vectors()
    return float(abs(graph_coordinate(E.vector, u, s) - graph_coordinate(F.vector, u, s)))


def principal_angle(E: Subspace, F: Subspace) -> float:
    """Angle in [0, pi/2] between two lines; cross-check metric only."""
    u, v = E.vector, F.vector
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), abs(float(u @ v)))


def pushforward(df, E: Subspace, base_point=None) -> Subspace:
    df = np.asarray(df, float)
    if abs(np.linalg.det(df)) < 1e-14 * max(1.0, np.abs(df).max()) ** 2:
        raise ValidationError("singular differential")
    bp = E.base_point if base_point is None else base_point
    return Subspace(bp, df @ E.basis)


def push_splitting(df, ref: Splitting) -> Splitting:
    return Splitting(pushforward(df, ref.unstable), pushforward(df, ref.stable))


def contraction_factor(df, ref: Splitting, E: Subspace, F: Subspace) -> float:
    """d(df E, df F) in the pushed frame over d(E, F) in the original frame."""
    d0 = graph_distance(E, F, ref)
    if d0 == 0:
        raise ValidationError("contraction factor undefined for E = F")
    d1 = graph_distance(pushforward(df, E), pushforward(df, F), push_splitting(df, ref))
    return d1 / d0


# ---------------------------------------------------------------------------
# splitting by iterated pushforward

@dataclass
class SplittingResult:
    unstable: Subspace
    stable: Subspace
    residual: float
    converged: bool
    iterations: int  # first k with residual_k < tol, or n_iter
    residual_history: np.ndarray = field(repr=False, default=None)
    stable_residual_history: np.ndarray = field(repr=False, default=None)

    @property
    def splitting(self) -> Splitting:
        return Splitting(self.unstable, self.stable)


def _iterate_line(step_points, dfun, seed, n_iter):
    """Directions E_k = D_1 D_2 ... D_k seed for k = 0..n_iter, batched.

    step_points[k] is the point where the k-th differential (k >= 1) is taken.
    """
    N = seed.shape[0]
    P = np.broadcast_to(np.eye(2), (N, 2, 2)).copy()
    out = np.empty((n_iter + 1, N, 2))
    out[0] = _unit(seed)
    for k in range(1, n_iter + 1):
        P = np.einsum("nij,njk->nik", P, dfun(step_points[k]))
        P /= np.linalg.norm(P, axis=(1, 2), keepdims=True)
        out[k] = _unit(np.einsum("nij,nj->ni", P, seed))
    return out


def splitting_batch(s: SmoothSystem, X, n_iter: int = 40, seed_u=(1.0, 0.0), seed_s=(0.0, 1.0),
                    history: bool = False):
    """Unstable/stable unit vectors at each row of X (N, 2).

    E^u_k(x) = Df^k_{f^-k x} seed, E^s_k(x) = Df^-k_{f^k x} seed. Returns
    (eu, es, residual) with residual the graph distance between the last two
    unstable iterates in the final frame, or full histories if asked.
    """
    if n_iter < 1:
        raise ValidationError("n_iter must be >= 1")
    X = np.atleast_2d(np.asarray(X, float))
    N = X.shape[0]
    su = np.broadcast_to(np.asarray(seed_u, float), (N, 2))
    ss = np.broadcast_to(np.asarray(seed_s, float), (N, 2))
    back = orbit(s, X, -n_iter)
    fwd = orbit(s, X, n_iter)
    Eu = _iterate_line(back, s.differential, su, n_iter)
    # d(f^-1) at f^k x is the inverse of df at f^(k-1) x; reusing the forward
    # orbit avoids inverting the map again
    prev = np.concatenate([fwd[:1], fwd[:-1]])
    Es = _iterate_line(prev, lambda y: np.linalg.inv(s.differential(y)), ss, n_iter)
    eu, es = Eu[-1], Es[-1]
    Lu = graph_coordinate(Eu, eu, es)
    # stable iterates measured as graphs over the stable line (frame swapped)
    Ls = graph_coordinate(Es, es, eu)
    ru = np.abs(np.diff(Lu, axis=0))
    rs = np.abs(np.diff(Ls, axis=0))
    if history:
        return eu, es, ru, rs
    return eu, es, ru[-1], rs[-1]


def compute_splitting(s: SmoothSystem, x, n_iter: int = 50, tol: float = 1e-10,
                      seed_u=(1.0, 0.0), seed_s=(0.0, 1.0), strict: bool = False) -> SplittingResult:
    """E^u and E^s at x by pushing seed lines along the backward/forward orbit.

    residual_history[k-1] is the graph distance between iterates k-1 and k.
    Non-convergence is reported in the result (or raised with strict=True).
    """
    x = s.reduce(np.asarray(x, float))
    eu, es, ru, rs = splitting_batch(s, x[None], n_iter, seed_u, seed_s, history=True)
    ru, rs = ru[:, 0], rs[:, 0]
    hit = np.flatnonzero(np.maximum(ru, rs) < tol)
    converged = bool(max(ru[-1], rs[-1]) < tol)
    it = int(hit[0]) + 1 if hit.size else n_iter
    res = SplittingResult(Subspace.line(eu[0], x), Subspace.line(es[0], x), float(ru[-1]),
                          converged, it, ru, rs)
    if strict and not converged:
        raise ConvergenceError(f"splitting not converged after {n_iter} iterations", res.residual)
    return res


def fit_rate(residuals, floor: float = 1e-13) -> float:
    """Exponential decay rate r from log-linear regression above a noise floor."""
    r = np.asarray(residuals, float)
    k = np.flatnonzero(r > floor)
    if k.size < 2:
        return 0.0
    # only the initial run above the floor
    stop = np.flatnonzero(np.diff(k) != 1)
    k = k[: stop[0] + 1] if stop.size else k
    if k.size < 2:
        return 0.0
    slope = np.polyfit(k, np.log(r[k]), 1)[0]
    return float(math.exp(slope))


# ---------------------------------------------------------------------------
# geometric potential

def geometric_potential(s: SmoothSystem, x, Eu) -> float:
    """-log |df_x u| for the unit vector u spanning Eu."""
    u = Eu.vector if isinstance(Eu, Subspace) else _unit(np.asarray(Eu, float))
    return float(-math.log(np.linalg.norm(s.differential(np.asarray(x, float)) @ u)))


def log_unstable_jacobians(s: SmoothSystem, X, n_max: int, n_iter: int = 40) -> np.ndarray:
    """log J^u f^n at each row of X for n = 0..n_max; shape (n_max+1, N).

    Computes E^u once at X and pushes it forward, so the n-th row is
    -S_n phi^u exactly as a sum of per-step logs.
    """
    X = np.atleast_2d(np.asarray(X, float))
    eu, _, _, _ = splitting_batch(s, X, n_iter)
    out = np.zeros((n_max + 1, X.shape[0]))
    y, u = X, eu
    for k in range(n_max):
        w = np.einsum("nij,nj->ni", s.differential(y), u)
        nw = np.linalg.norm(w, axis=1)
        out[k + 1] = out[k] + np.log(nw)
        u = w / nw[:, None]
        y = s.apply(y)
    return out


def unstable_jacobian(s: SmoothSystem, x, n: int, n_iter: int = 40) -> float:
    """J^u f^n(x) = product of per-step expansion along E^u."""
    if n == 0:
        return 1.0
    return float(math.exp(log_unstable_jacobians(s, x, n, n_iter)[n, 0]))


class GeometricPotential:
    """phi^u = -log J^u f, evaluated in batches."""

    name = "geometric"

    def __init__(self, s: SmoothSystem, n_iter: int = 24, shift: float = 0.0):
        self.s = s
        self.n_iter = n_iter
        self.shift = shift

    def __call__(self, X):
        L = log_unstable_jacobians(self.s, X, 1, self.n_iter)
        return -L[1] + self.shift

    def birkhoff_sums(self, X, n_max: int) -> np.ndarray:
        """S_n phi^u for n = 0..n_max, shape (n_max+1, N)."""
        L = log_unstable_jacobians(self.s, X, n_max, self.n_iter)
        return -L + self.shift * np.arange(n_max + 1)[:, None]


def dyn_distance_points(s: SmoothSystem, x, y, n: int) -> float:
    ox, oy = orbit(s, x, n - 1), orbit(s, y, n - 1)
    return float(np.max(s.metric(ox, oy)))


def distortion_ratio(s: SmoothSystem, x, y, n: int, eps: float = 0.05, n_iter: int = 40) -> float:
    """J^u f^n(x) / J^u f^n(y) for y in the Bowen ball B_n(x, eps)."""
    if dyn_distance_points(s, x, y, max(n, 1)) > eps:
        raise BowenBallError(f"y is not in B_{n}(x, {eps})")
    L = log_unstable_jacobians(s, np.stack([np.asarray(x, float), np.asarray(y, float)]), n, n_iter)
    return float(math.exp(L[n, 0] - L[n, 1]))


# ---------------------------------------------------------------------------
# local leaves by shooting

class LeafShooter:
    """Local stable (forward=True) or unstable leaves through a batch of points.

    Leaf points are x + t e_along + w e_across. For each t the offset w is
    found by continuation in the shooting length: at level N the expanding
    component of f^{+-N}(z) - f^{+-N}(x), taken in the splitting at
    f^{+-N}(x), is driven to zero by Newton steps. Frames along the base
    orbits are computed once.
    """

    def __init__(self, s: SmoothSystem, X, forward: bool, n_shoot: int = 14, n_iter: int = 40,
                 frames=None):
        self.s = s
        self.X = np.atleast_2d(np.asarray(X, float))
        self.forward = forward
        self.n_shoot = n_shoot
        N = self.X.shape[0]
        if frames is None:
            eu, es, _, _ = splitting_batch(s, self.X, n_iter)
        else:
            eu, es = frames
        self.along, self.across = (es, eu) if forward else (eu, es)
        self.obase = orbit(s, self.X, n_shoot if forward else -n_shoot)
        Fu, Fs, _, _ = splitting_batch(s, self.obase.reshape(-1, 2), n_iter)
        Fu, Fs = Fu.reshape(n_shoot + 1, N, 2), Fs.reshape(n_shoot + 1, N, 2)
        # expanding / contracting directions along the shooting orbit
        self.fe, self.fc = (Fu, Fs) if forward else (Fs, Fu)

    def points(self, ts) -> np.ndarray:
        s = self.s
        ts = np.asarray(ts, float)
        N = self.X.shape[0]
        if ts.ndim == 1:
            ts = np.broadcast_to(ts, (N, ts.size))
        T = ts.shape[1]
        step = s.apply if self.forward else s.apply_inv
        dstep = s.differential if self.forward else s.differential_inv
        base = np.repeat(self.X, T, axis=0)
        a_vec = np.repeat(self.along, T, axis=0)
        c_vec = np.repeat(self.across, T, axis=0)
        tt = ts.reshape(-1)
        w = np.zeros_like(tt)
        for level in range(1, self.n_shoot + 1):
            ce = np.repeat(self.fe[level], T, axis=0)
            cc = np.repeat(self.fc[level], T, axis=0)
            ob = np.repeat(self.obase[level], T, axis=0)
            det = ce[:, 0] * cc[:, 1] - ce[:, 1] * cc[:, 0]
            for _ in range(3 if level == self.n_shoot else 1):
                z = s.reduce(base + tt[:, None] * a_vec + w[:, None] * c_vec)
                y, J = z, c_vec.copy()
                for _k in range(level):
                    J = np.einsum("nij,nj->ni", dstep(y), J)
                    y = step(y)
                dlt = torus_diff(ob, y)
                r = (dlt[:, 0] * cc[:, 1] - dlt[:, 1] * cc[:, 0]) / det
                dr = (J[:, 0] * cc[:, 1] - J[:, 1] * cc[:, 0]) / det
                w = w - r / dr
        z = s.reduce(base + tt[:, None] * a_vec + w[:, None] * c_vec)
        return z.reshape(N, T, 2)


def stable_leaf_points(s: SmoothSystem, x, ts, n_shoot: int = 14, n_iter: int = 40):
    """Points on W^s_loc(x) with coordinate t along E^s(x); shape (len(ts), 2) for one x."""
    x = np.asarray(x, float)
    out = LeafShooter(s, x, True, n_shoot, n_iter).points(ts)
    return out[0] if x.ndim == 1 else out


def unstable_leaf_points(s: SmoothSystem, x, ts, n_shoot: int = 14, n_iter: int = 40):
    x = np.asarray(x, float)
    out = LeafShooter(s, x, False, n_shoot, n_iter).points(ts)
    return out[0] if x.ndim == 1 else out


def bracket(s: SmoothSystem, x, y, tol: float = 1e-10, n_shoot: int = 14, n_iter: int = 40,
            max_iter: int = 30):
    """[x, y] = W^s_loc(x) cap W^u_loc(y) for a batch of pairs (N, 2).

    Seeded by the intersection of the straight lines x + t e_s(x) and
    y + r e_u(y), then refined by Newton on (t, r) with the leaves computed
    by shooting. Returns (z, t, r).
    """
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    eux, esx, _, _ = splitting_batch(s, x, n_iter)
    euy, esy, _, _ = splitting_batch(s, y, n_iter)
    d = torus_diff(x, y)
    # x + t es = x + d + r eu  ->  t es - r eu = d
    M = np.stack([esx, -euy], axis=-1)
    tr = np.linalg.solve(M, d[..., None])[..., 0]
    t, r = tr[:, 0], tr[:, 1]

    sx = LeafShooter(s, x, True, n_shoot, n_iter, (eux, esx))
    sy = LeafShooter(s, y, False, n_shoot, n_iter, (euy, esy))

    def leafs(t, r):
        return sx.points(t[:, None])[:, 0], sy.points(r[:, None])[:, 0]

    h = 1e-7
    for _ in range(max_iter):
        zs, zu = leafs(t, r)
        F = torus_diff(zu, zs)
        if np.max(np.linalg.norm(F, axis=1)) < tol:
            return zs, t, r
        zs_t, _ = leafs(t + h, r)
        _, zu_r = leafs(t, r + h)
        Jt = torus_diff(zs, zs_t) / h
        Jr = -torus_diff(zu, zu_r) / h
        J = np.stack([Jt, Jr], axis=-1)
        delta = np.linalg.solve(J, -F[..., None])[..., 0]
        t, r = t + delta[:, 0], r + delta[:, 1]
    zs, zu = leafs(t, r)
    res = float(np.max(np.linalg.norm(torus_diff(zu, zs), axis=1)))
    if res >= tol:
        raise ConvergenceError("bracket Newton iteration did not converge", res)
    return zs, t, r
