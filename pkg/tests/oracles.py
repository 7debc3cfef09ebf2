"""Slow, loop-based reference implementations used to cross-check the library."""
import cmath
import itertools
import math

import numpy as np

from homeleak.core import ConfusionCounts


# --------------------------------------------------------------------------
# feature bank

def o_mean(x):
    return math.fsum(x) / len(x)


def o_var(x):
    m = o_mean(x)
    return math.fsum((v - m) ** 2 for v in x) / len(x)


def o_median(x):
    s = sorted(x)
    n = len(s)
    return s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def o_skew(x):
    n = len(x)
    if n < 3:
        return 0.0
    m = o_mean(x)
    m2 = math.fsum((v - m) ** 2 for v in x) / n
    if m2 <= 0:
        return 0.0
    m3 = math.fsum((v - m) ** 3 for v in x) / n
    return math.sqrt(n * (n - 1)) / (n - 2) * m3 / m2 ** 1.5


def o_entropy(x, bins=10):
    lo, hi = min(x), max(x)
    if lo == hi:
        return 0.0
    step = (hi - lo) / bins
    edges = [lo + i * step for i in range(bins)] + [hi]
    counts = [0] * bins
    for v in x:
        # equal-width bins, half-open except the last, which includes hi
        i = max(j for j in range(bins) if v >= edges[j])
        counts[i] += 1
    return -math.fsum(c / len(x) * math.log(c / len(x)) for c in counts if c)


def o_ricker(points, a):
    amp = 2 / (math.sqrt(3 * a) * math.pi ** 0.25)
    out = []
    for i in range(points):
        t = i - (points - 1) / 2
        out.append(amp * (1 - t * t / (a * a)) * math.exp(-t * t / (2 * a * a)))
    return out


def o_cwt_first(x, width, count):
    """First ``count`` samples of the 'same'-size convolution of x with the wavelet."""
    x = list(x) + [0.0] * max(0, count - len(x))
    n = len(x)
    w = o_ricker(min(10 * width, n), width)[::-1]
    m = len(w)
    full = [math.fsum(x[k] * w[j - k] for k in range(n) if 0 <= j - k < m) for j in range(n + m - 1)]
    start = (m - 1) // 2
    return full[start:start + n][:count]


def o_fft_abs(x, count):
    n = len(x)
    out = []
    for k in range(count):
        if k >= n:
            out.append(0.0)
            continue
        out.append(abs(sum(x[j] * cmath.exp(-2j * math.pi * k * j / n) for j in range(n))))
    return out


def o_poly(x, degree=3):
    n = len(x)
    deg = min(degree, n - 1)
    # normal equations on a centred, scaled index, then mapped back to the raw index
    c = (n - 1) / 2
    s = max(c, 1.0)
    u = [(i - c) / s for i in range(n)]
    A = np.array([[ui ** p for p in range(deg + 1)] for ui in u])
    coef_u = np.linalg.solve(A.T @ A, A.T @ np.asarray(x, dtype=float))
    out = [0.0] * (degree + 1)
    # expand sum_p a_p ((i - c)/s)^p in powers of i
    for p, a in enumerate(coef_u):
        for q in range(p + 1):
            out[q] += a * math.comb(p, q) * (-c) ** (p - q) / s ** p
    return out


def o_series_features(x):
    x = [float(v) for v in x]
    if not x:
        return [0.0] * 44
    var = o_var(x)
    out = [math.fsum(v * v for v in x), float(len(x)), o_mean(x), o_median(x), o_skew(x), o_entropy(x),
           math.sqrt(var), var, min(x), max(x)]
    for w in (2, 5, 10, 20):
        out += o_cwt_first(x, w, 5)
    out += o_fft_abs(x, 10)
    out += o_poly(x)
    return out


# index ranges inside the 44-vector
EXACT = list(range(0, 10))
CWT = list(range(10, 30))
FFT = list(range(30, 40))
POLY = list(range(40, 44))


# --------------------------------------------------------------------------
# kNN

def o_knn_loo(X, y, k):
    """Leave-one-out kNN on standardized features, ties by count, then mean distance, then label."""
    X = np.asarray(X, dtype=float)
    n = len(y)
    preds = []
    for q in range(n):
        rows = [i for i in range(n) if i != q]
        mu = [o_mean([X[i, j] for i in rows]) for j in range(X.shape[1])]
        sd = [math.sqrt(o_var([X[i, j] for i in rows])) for j in range(X.shape[1])]

        def z(i):
            return [(X[i, j] - mu[j]) / sd[j] if sd[j] > 0 else 0.0 for j in range(X.shape[1])]

        zq = z(q)
        dist = []
        for i in rows:
            zi = z(i)
            dist.append((math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(zi, zq))), rows.index(i), y[i]))
        dist.sort()
        top = dist[:k]
        votes = {}
        for d, _, lab in top:
            c, s = votes.get(lab, (0, 0.0))
            votes[lab] = (c + 1, s + d)
        preds.append(min(votes, key=lambda lab: (-votes[lab][0], votes[lab][1] / votes[lab][0], lab)))
    return preds


# --------------------------------------------------------------------------
# HMM

def o_hmm(pi, A, B, obs):
    """Best path, its log-probability and the total log-likelihood by enumeration.

    ``B[s][t]`` is the probability of observation t under state s.
    """
    S, T = len(pi), len(obs)
    best, best_lp, total = None, -math.inf, 0.0
    for path in itertools.product(range(S), repeat=T):
        p = pi[path[0]] * B[path[0]][0]
        for t in range(1, T):
            p *= A[path[t - 1]][path[t]] * B[path[t]][t]
        total += p
        lp = math.log(p) if p > 0 else -math.inf
        if lp > best_lp + 1e-12:
            best, best_lp = path, lp
    return list(best), best_lp, math.log(total)


# --------------------------------------------------------------------------
# metrics

def o_metrics(tp, fp, tn, fn):
    def r(a, b):
        return a / b if b else None
    return {"tpr": r(tp, tp + fn), "fnr": r(fn, tp + fn), "tnr": r(tn, tn + fp), "fpr": r(fp, tn + fp),
            "precision": r(tp, tp + fp), "accuracy": r(tp + tn, tp + fp + tn + fn),
            "f1": r(2 * tp, 2 * tp + fp + fn)}


METRIC_CASES = [
    ConfusionCounts(9, 1, 9, 1), ConfusionCounts(96, 5, 94, 3), ConfusionCounts(5, 0, 0, 0),
    ConfusionCounts(0, 5, 0, 0), ConfusionCounts(0, 0, 5, 0), ConfusionCounts(0, 0, 0, 5),
    ConfusionCounts(1, 1, 0, 0), ConfusionCounts(0, 0, 1, 1), ConfusionCounts(1, 0, 0, 1),
    ConfusionCounts(0, 1, 1, 0), ConfusionCounts(1, 0, 1, 0), ConfusionCounts(0, 1, 0, 1),
    ConfusionCounts(3, 7, 11, 13), ConfusionCounts(100, 0, 100, 0), ConfusionCounts(0, 100, 0, 100),
    ConfusionCounts(1, 2, 3, 4), ConfusionCounts(50, 25, 12, 6), ConfusionCounts(7, 0, 3, 0),
    ConfusionCounts(0, 3, 7, 0), ConfusionCounts(0, 0, 7, 3), ConfusionCounts(2, 2, 2, 2),
    ConfusionCounts(999, 1, 0, 0), ConfusionCounts(1, 999, 1, 999), ConfusionCounts(13, 17, 19, 23),
    ConfusionCounts(1, 0, 0, 0),
]
