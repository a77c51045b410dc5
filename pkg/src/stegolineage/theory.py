"""Closed-form phylogenetic accuracy and its Monte Carlo oracle.

With ``H*`` ~ Bin(n, q) the agreement count of the true parent and each of
the ``N - 1`` unrelated candidates drawing ``H`` ~ Bin(n, p) independently,
the probability that the parent ranks strictly first is

    sum_k P(H* = k) * P(H < k) ** (N - 1)

Everything is evaluated in log space; the lower CDF is taken from its upper
tail whenever it is close to one so that large pools do not amplify rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class TheoryParams:
    n: int
    p: float
    q: float
    N: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError("p and q must lie in [0, 1]")
        if self.N < 1 or int(self.N) != self.N:
            raise ValueError("pool size N must be a positive integer")


def log_binom_pmf(n: int, k: int, p: float) -> float:
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    if p == 0.0:
        return 0.0 if k == 0 else -math.inf
    if p == 1.0:
        return 0.0 if k == n else -math.inf
    log_c = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return log_c + k * math.log(p) + (n - k) * math.log1p(-p)


def _logsumexp(values) -> float:
    finite = [v for v in values if v != -math.inf]
    if not finite:
        return -math.inf
    top = max(finite)
    return top + math.log(math.fsum(math.exp(v - top) for v in finite))


def log_pmf_vector(n: int, p: float) -> list[float]:
    return [log_binom_pmf(n, k, p) for k in range(n + 1)]


def log_cdf_below(n: int, p: float) -> list[float]:
    """``log P(H < k)`` for k = 0..n."""
    lp = log_pmf_vector(n, p)
    out = []
    for k in range(n + 1):
        if k == 0:
            out.append(-math.inf)
            continue
        lower = _logsumexp(lp[:k])
        if lower > math.log(0.5):
            upper = _logsumexp(lp[k:])
            out.append(math.log1p(-math.exp(upper)) if upper != -math.inf else 0.0)
        else:
            out.append(lower)
    return out


def phylo_accuracy(tp: TheoryParams) -> float:
    """Probability that the true parent's agreement strictly exceeds every unrelated candidate's."""
    if tp.N == 1:
        return 1.0
    lq = log_pmf_vector(tp.n, tp.q)
    lc = log_cdf_below(tp.n, tp.p)
    terms = []
    for k in range(tp.n + 1):
        if lq[k] == -math.inf or lc[k] == -math.inf:
            continue
        terms.append(math.exp(lq[k] + (tp.N - 1) * lc[k]))
    return min(1.0, max(0.0, math.fsum(terms)))


def mc_accuracy(tp: TheoryParams, trials: int, seed: int = 0, chunk: int = 2_000_000) -> tuple[float, float]:
    """Monte Carlo estimate of :func:`phylo_accuracy` and its binomial standard error."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if tp.N == 1:
        return 1.0, 0.0
    rng = np.random.default_rng(seed)
    others = tp.N - 1
    rows = max(1, chunk // others)
    wins = 0
    done = 0
    while done < trials:
        size = min(rows, trials - done)
        parent = rng.binomial(tp.n, tp.q, size=size)
        best_other = rng.binomial(tp.n, tp.p, size=(size, others)).max(axis=1)
        wins += int(np.count_nonzero(parent > best_other))
        done += size
    est = wins / trials
    return est, math.sqrt(est * (1.0 - est) / trials)


def accuracy_curve(n: int, p_list, q_grid, N_list) -> list[tuple[float, float, int, float]]:
    """Rows ``(p, q, N, accuracy)`` over the Cartesian grid, sorted by (p, q, N)."""
    if not (len(p_list) and len(q_grid) and len(N_list)):
        raise ValueError("grids must be non-empty")
    rows = [(float(p), float(q), int(N), phylo_accuracy(TheoryParams(n, p, q, N)))
            for p, q, N in product(p_list, q_grid, N_list)]
    return sorted(rows, key=lambda r: r[:3])


def agreement_distributions(n: int, p: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """PMFs of the true-parent count Bin(n, q) and the unrelated count Bin(n, p)."""
    TheoryParams(n, p, q, 1)
    return (np.exp(np.array(log_pmf_vector(n, q))),
            np.exp(np.array(log_pmf_vector(n, p))))


def curve_csv(rows) -> str:
    lines = ["p,q,N,accuracy"]
    lines += [f"{p:.12g},{q:.12g},{N},{acc:.12g}" for p, q, N, acc in rows]
    return "\n".join(lines) + "\n"
