"""One-sided subshifts of finite type and locally constant potentials.

Words are tuples of symbols. A depth-m potential is a value on every
admissible m-word; the transfer operator acts on functions of the first
m-1 symbols. Everything here is exact linear algebra on small state spaces
plus a power iteration for the Perron data.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, NonDiniError, ValidationError
from .modulus import Modulus, tilde_series


class SFT:
    def __init__(self, adjacency):
        A = np.asarray(adjacency, dtype=np.int64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValidationError("adjacency must be a square matrix")
        if not np.all((A == 0) | (A == 1)):
            raise ValidationError("adjacency must be 0/1")
        if np.any(A.sum(axis=1) == 0) or np.any(A.sum(axis=0) == 0):
            raise ValidationError("every symbol must have a successor and a predecessor")
        self.A = A
        self.k = A.shape[0]
        reach = np.linalg.matrix_power(np.eye(self.k, dtype=np.int64) + A, self.k - 1) if self.k > 1 else np.ones((1, 1))
        self.irreducible = bool(np.all(reach > 0))
        self.period = _period(A) if self.irreducible else 0

    @property
    def alphabet_size(self) -> int:
        return self.k

    def admissible(self, w) -> bool:
        return all(self.A[a, b] for a, b in zip(w, w[1:]))

    def words(self, n: int) -> np.ndarray:
        """All admissible n-words in lexicographic order, shape (count, n)."""
        if n < 0:
            raise ValidationError("word length must be >= 0")
        if n == 0:
            return np.zeros((1, 0), dtype=np.int64)
        W = np.arange(self.k)[:, None]
        for _ in range(n - 1):
            last = W[:, -1]
            rows, nxt = np.nonzero(self.A[last])
            W = np.column_stack([W[rows], nxt])
        return W

    def to_dict(self) -> dict:
        return {"alphabet_size": self.k, "adjacency": self.A.tolist()}

    def __repr__(self):
        return f"SFT({self.A.tolist()})"


def _period(A) -> int:
    # gcd of cycle lengths through symbol 0, read off from powers of A
    k = A.shape[0]
    g = 0
    P = np.eye(k, dtype=bool)
    B = A.astype(bool)
    for n in range(1, 2 * k * k + 1):
        P = (P.astype(np.int64) @ B.astype(np.int64)) > 0
        if P[0, 0]:
            g = math.gcd(g, n)
            if g == 1:
                break
    return g


def full_shift(k: int = 2) -> SFT:
    return SFT(np.ones((k, k), dtype=np.int64))


def golden_mean_shift() -> SFT:
    return SFT([[1, 1], [1, 0]])


def _word_index(W, k):
    W = np.asarray(W, dtype=np.int64)
    powers = k ** np.arange(W.shape[1] - 1, -1, -1, dtype=np.int64)
    return W @ powers


@dataclass
class CylinderPotential:
    depth: int
    values: dict  # tuple word -> float
    declared_modulus: Modulus | None = None
    decay_rate: float = 0.5

    def __post_init__(self):
        if self.depth < 2:
            raise ValidationError("depth must be >= 2")
        if not 0 < self.decay_rate < 1:
            raise ValidationError("decay_rate must lie in (0, 1)")
        self.values = {tuple(int(a) for a in w): float(v) for w, v in self.values.items()}
        for w in self.values:
            if len(w) != self.depth:
                raise ValidationError(f"word {w} does not have length {self.depth}")

    def array_for(self, sft: SFT) -> np.ndarray:
        """Values on sft.words(depth), raising if the keys do not match exactly."""
        W = sft.words(self.depth)
        keys = [tuple(int(a) for a in w) for w in W]
        missing = [w for w in keys if w not in self.values]
        if missing or len(keys) != len(self.values):
            raise ValidationError("potential values must be given exactly on the admissible words")
        return np.array([self.values[w] for w in keys])

    def shifted(self, c: float) -> "CylinderPotential":
        return CylinderPotential(self.depth, {w: v + c for w, v in self.values.items()},
                                 self.declared_modulus, self.decay_rate)

    def to_dict(self) -> dict:
        return {"depth": self.depth,
                "values": {"".join(map(str, w)) if all(a < 10 for a in w) else ",".join(map(str, w)): v
                           for w, v in self.values.items()},
                "decay_rate": self.decay_rate,
                "declared_modulus": None if self.declared_modulus is None else self.declared_modulus.to_dict()}


def _parse_word(key: str):
    return tuple(int(a) for a in (key.split(",") if "," in key else key))


def potential_from_function(sft: SFT, depth: int, fn, **kw) -> CylinderPotential:
    return CylinderPotential(depth, {tuple(map(int, w)): float(fn(tuple(map(int, w)))) for w in sft.words(depth)}, **kw)


def constant_potential(sft: SFT, c: float = 0.0, depth: int = 2) -> CylinderPotential:
    return potential_from_function(sft, depth, lambda w: c)


def bernoulli_potential(p: float, depth: int = 2) -> CylinderPotential:
    """Full 2-shift potential log p / log(1-p) on the first symbol."""
    if not 0 < p < 1:
        raise ValidationError("p must lie in (0, 1)")
    c = (math.log(p), math.log(1 - p))
    return potential_from_function(full_shift(2), depth, lambda w: c[w[0]])


def dini_example_potential(depth: int = 8, beta: float = 2.0, decay: float = 0.5,
                           amplitude: float = 0.5) -> CylinderPotential:
    """phi(w) = sum_i (omega(decay^i) - omega(decay^(i+1))) w_i on the full 2-shift.

    omega = amplitude * log_power(beta), Dini for beta > 1. The j-th
    variation is omega(decay^j) - omega(decay^depth) <= omega(decay^j).
    """
    om = Modulus.log_power(beta, scale=amplitude)
    steps = np.array([om.eval(decay ** i) - om.eval(decay ** (i + 1)) for i in range(depth)])
    return potential_from_function(full_shift(2), depth, lambda w: float(np.dot(steps, w)),
                                   declared_modulus=om, decay_rate=decay)


# ---------------------------------------------------------------------------
# transfer operator

class TransferOperator:
    """(L v)(w) = sum_{a: aw admissible} exp(phi(a w)) v((a w)[:m-1]) on (m-1)-words."""

    def __init__(self, sft: SFT, pot: CylinderPotential):
        self.sft, self.pot = sft, pot
        m, k = pot.depth, sft.k
        self.states = sft.words(m - 1)
        self.mwords = sft.words(m)
        phi = pot.array_for(sft)
        self.phi = phi
        # dense index of (m-1)-words -> state row
        lookup = -np.ones(k ** (m - 1), dtype=np.int64)
        lookup[_word_index(self.states, k)] = np.arange(len(self.states))
        self._lookup = lookup
        rows = lookup[_word_index(self.mwords[:, 1:], k)]   # w = (aw)[1:]
        cols = lookup[_word_index(self.mwords[:, :-1], k)]  # (aw)[:m-1]
        n = len(self.states)
        self.matrix = sp.csr_matrix((np.exp(phi), (rows, cols)), shape=(n, n))

    @property
    def size(self) -> int:
        return len(self.states)

    def state_index(self, words) -> np.ndarray:
        W = np.atleast_2d(np.asarray(words, dtype=np.int64))
        return self._lookup[_word_index(W, self.sft.k)]

    def apply(self, v):
        v = np.asarray(v, float)
        if v.shape != (self.size,):
            raise ValidationError(f"vector must have length {self.size}")
        return self.matrix @ v

    def apply_adjoint(self, v):
        v = np.asarray(v, float)
        if v.shape != (self.size,):
            raise ValidationError(f"vector must have length {self.size}")
        return self.matrix.T @ v


def transfer_apply(sft: SFT, pot: CylinderPotential, v) -> np.ndarray:
    return TransferOperator(sft, pot).apply(v)


@dataclass
class RPFData:
    eigenvalue: float
    eigenfunction: np.ndarray
    eigenmeasure: np.ndarray
    gibbs: np.ndarray
    states: np.ndarray = field(repr=False)
    iterations: int = 0
    bracket: tuple = (0.0, 0.0)

    def gibbs_dict(self) -> dict:
        return {tuple(map(int, w)): float(g) for w, g in zip(self.states, self.gibbs)}


def _perron(apply, n, tol, max_iter):
    """Lazy power iteration with Collatz-Wielandt bounds on the eigenvalue."""
    v = np.ones(n)
    lo, hi = 0.0, math.inf
    for it in range(1, max_iter + 1):
        w = apply(v)
        r = w / v
        lo, hi = float(r.min()), float(r.max())
        if hi - lo <= tol * hi:
            lam = 0.5 * (lo + hi)
            v = w / w.sum()
            return lam, v, it, (lo, hi)
        # averaging with the previous iterate removes periodic oscillation
        v = v / v.sum() + w / w.sum()
        v /= v.sum()
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", hi - lo)


def rpf_solve(sft: SFT, pot: CylinderPotential, tol: float = 1e-12, max_iter: int = 100_000) -> RPFData:
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    if not sft.irreducible:
        raise ValidationError("SFT is reducible")
    L = TransferOperator(sft, pot)
    lam, h, it1, br = _perron(L.apply, L.size, tol, max_iter)
    lam2, nu, it2, _ = _perron(L.apply_adjoint, L.size, tol, max_iter)
    if abs(lam - lam2) > 10 * tol * lam:
        raise ConvergenceError("left and right eigenvalues disagree", abs(lam - lam2))
    if np.any(h <= 0):
        raise ConvergenceError("eigenfunction is not positive", float(h.min()))
    nu = nu / nu.sum()
    h = h / float(h @ nu)
    return RPFData(lam, h, nu, h * nu, L.states, it1 + it2, br)


def pressure_of(sft: SFT, pot: CylinderPotential, tol: float = 1e-12) -> float:
    return math.log(rpf_solve(sft, pot, tol).eigenvalue)


def truncation_tail(pot: CylinderPotential, C: float | None = None) -> float:
    """Bound sum_{j>=m} C omega(lambda^j) on the depth-m truncation error."""
    if pot.declared_modulus is None:
        return math.nan
    if C is None:
        C = variation_profile(pot)["C"]
    lam, m = pot.decay_rate, pot.depth
    om = pot.declared_modulus
    t = lam ** m
    if t > om.t_max:
        return math.inf
    try:
        return C * tilde_series(om, lam, t)
    except NonDiniError:
        return math.inf


# ---------------------------------------------------------------------------
# measures and checks

def cylinder_masses(sft: SFT, pot: CylinderPotential, data: RPFData, n: int):
    """(words, masses) of the Gibbs measure on all admissible n-words.

    For n >= m-1 the eigenmeasure is extended one symbol at a time with
    nu[a w] = exp(phi((a w)[:m])) nu[w] / lambda, then multiplied by h on
    the leading (m-1)-block. For n < m-1 masses are marginals.
    """
    L = TransferOperator(sft, pot)
    m = pot.depth
    if n < 1:
        raise ValidationError("n must be >= 1")
    if n <= m - 1:
        W = sft.words(n)
        idx = _word_index(W, sft.k)
        full_idx = _word_index(data.states[:, :n], sft.k)
        mass = np.zeros(W.shape[0])
        pos = {int(i): r for r, i in enumerate(idx)}
        for i, g in zip(full_idx, data.gibbs):
            mass[pos[int(i)]] += g
        return W, mass
    # grow words leftwards from the (m-1)-blocks
    W = data.states.copy()
    nu = data.eigenmeasure.copy()
    phi_at = np.full(sft.k ** m, np.nan)
    phi_at[_word_index(L.mwords, sft.k)] = L.phi
    for _ in range(n - (m - 1)):
        new_w, new_nu = [], []
        for a in range(sft.k):
            ok = sft.A[a, W[:, 0]] == 1
            if not np.any(ok):
                continue
            Wa = np.column_stack([np.full(ok.sum(), a), W[ok]])
            ph = phi_at[_word_index(Wa[:, :m], sft.k)]
            new_w.append(Wa)
            new_nu.append(np.exp(ph) * nu[ok] / data.eigenvalue)
        W = np.concatenate(new_w)
        nu = np.concatenate(new_nu)
    order = np.lexsort(W.T[::-1])
    W, nu = W[order], nu[order]
    h = data.eigenfunction[L.state_index(W[:, :m - 1])]
    return W, h * nu


def birkhoff_range(sft: SFT, pot: CylinderPotential, n: int):
    """(words, min, max) of S_n phi(x) over x in each admissible n-cylinder.

    S_n phi(x) needs n + m - 1 symbols of x, so every admissible extension of
    the cylinder by m - 1 symbols is enumerated.
    """
    m = pot.depth
    L = TransferOperator(sft, pot)
    phi_at = np.full(sft.k ** m, np.nan)
    phi_at[_word_index(L.mwords, sft.k)] = L.phi
    X = sft.words(n + m - 1)
    S = np.zeros(X.shape[0])
    top = sft.k ** (m - 1)
    idx = _word_index(X[:, :m], sft.k)
    for i in range(n):
        if i:
            idx = (idx - X[:, i - 1] * top) * sft.k + X[:, i + m - 1]
        S += phi_at[idx]
    key = _word_index(X[:, :n], sft.k)
    W = sft.words(n)
    wkey = _word_index(W, sft.k)
    pos = np.searchsorted(wkey, key)
    lo = np.full(W.shape[0], np.inf)
    hi = np.full(W.shape[0], -np.inf)
    np.minimum.at(lo, pos, S)
    np.maximum.at(hi, pos, S)
    return W, lo, hi


def gibbs_bounds(sft: SFT, pot: CylinderPotential, data: RPFData, n_max: int | None = None) -> dict:
    """Fitted b, B with b <= mu[w] / exp(-P n + S_n phi(x)) <= B for x in [w].

    Per-n constants b_n, B_n are taken over all n-words and all x in each
    cylinder; the spreads max/min of b_n and of B_n across n = 1..n_max
    measure how far the constants are from being independent of n.
    """
    m = pot.depth
    n_max = m + 5 if n_max is None else n_max
    P = math.log(data.eigenvalue)
    b_n, B_n = [], []
    for n in range(1, n_max + 1):
        W, mass = cylinder_masses(sft, pot, data, n)
        W2, lo, hi = birkhoff_range(sft, pot, n)
        if not np.array_equal(W, W2):
            raise ValidationError("word enumeration mismatch")
        b_n.append(float(np.min(mass / np.exp(-P * n + hi))))
        B_n.append(float(np.max(mass / np.exp(-P * n + lo))))
    b_n, B_n = np.array(b_n), np.array(B_n)
    return {"n": list(range(1, n_max + 1)), "b_n": b_n.tolist(), "B_n": B_n.tolist(),
            "b": float(b_n.min()), "B": float(B_n.max()),
            "spread_b": float(b_n.max() / b_n.min()), "spread_B": float(B_n.max() / B_n.min())}


def stationarity_residual(sft: SFT, pot: CylinderPotential, data: RPFData) -> float:
    """max |sum_a mu[a w] - mu[w]| and |sum_a mu[w a] - mu[w]| over (m-1)-words."""
    m = pot.depth
    W, mass = cylinder_masses(sft, pot, data, m)
    L = TransferOperator(sft, pot)
    left = np.zeros(L.size)
    right = np.zeros(L.size)
    np.add.at(left, L.state_index(W[:, 1:]), mass)
    np.add.at(right, L.state_index(W[:, :-1]), mass)
    return float(max(np.abs(left - data.gibbs).max(), np.abs(right - data.gibbs).max()))


def entropy_check(sft: SFT, pot: CylinderPotential, data: RPFData) -> dict:
    """h(mu) + int phi dmu - log lambda for the Gibbs measure.

    The Gibbs measure is Markov of order m-1, so its entropy is the
    conditional entropy of the m-th symbol given the previous m-1.
    """
    m = pot.depth
    W, mass = cylinder_masses(sft, pot, data, m)
    L = TransferOperator(sft, pot)
    prev = data.gibbs[L.state_index(W[:, :m - 1])]
    pos = mass > 0
    h = float(-np.sum(mass[pos] * np.log(mass[pos] / prev[pos])))
    integral = float(np.sum(mass * np.array([pot.values[tuple(map(int, w))] for w in W])))
    P = math.log(data.eigenvalue)
    return {"entropy": h, "integral": integral, "pressure": P, "residual": h + integral - P}


def variation_profile(pot: CylinderPotential) -> dict:
    """var_j for j = 1..m-1 and the smallest C with var_j <= C omega(lambda^j)."""
    m = pot.depth
    words = list(pot.values)
    vals = np.array([pot.values[w] for w in words])
    prof = []
    for j in range(1, m):
        groups: dict = {}
        for w, v in zip(words, vals):
            lo, hi = groups.get(w[:j], (v, v))
            groups[w[:j]] = (min(lo, v), max(hi, v))
        prof.append((j, max(hi - lo for lo, hi in groups.values())))
    C = 0.0
    om = pot.declared_modulus
    if om is not None:
        for j, v in prof:
            t = pot.decay_rate ** j
            wv = om.eval(min(t, om.t_max))
            if v > 0:
                C = max(C, v / wv) if wv > 0 else math.inf
    return {"profile": prof, "C": C}


# ---------------------------------------------------------------------------
# I/O

def load_shift_json(path_or_dict):
    d = path_or_dict
    if not isinstance(d, dict):
        with open(d) as fh:
            d = json.load(fh)
    for key in ("alphabet_size", "adjacency", "depth", "values"):
        if key not in d:
            raise ValidationError(f"missing key {key!r}")
    sft = SFT(d["adjacency"])
    if sft.k != d["alphabet_size"]:
        raise ValidationError("alphabet_size does not match adjacency")
    om = d.get("declared_modulus")
    pot = CylinderPotential(int(d["depth"]), {_parse_word(k): v for k, v in d["values"].items()},
                            Modulus.from_dict(om) if om else None, float(d.get("decay_rate", 0.5)))
    pot.array_for(sft)
    return sft, pot


def dump_shift_json(sft: SFT, pot: CylinderPotential) -> dict:
    return {**sft.to_dict(), **pot.to_dict()}


def write_gibbs_csv(path, data: RPFData):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["word", "mass"])
        for word, g in zip(data.states, data.gibbs):
            w.writerow(["".join(map(str, word)), repr(float(g))])
