"""k-nearest neighbours, random forests and a supervised HMM, in plain numpy."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

MODEL_FORMAT = "homeleak-model"
MODEL_VERSION = 1


class ModelError(ValueError):
    """A model that is missing, malformed or incompatible with its input."""


def _check_matrix(X, d: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"dimension mismatch: model has {d} features, input has {X.shape[1]}")
    return X


def _sorted_labels(y) -> list:
    return sorted(set(y.tolist() if isinstance(y, np.ndarray) else y))


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


# --------------------------------------------------------------------------
# k-nearest neighbours

@dataclass(frozen=True)
class KnnModel:
    X: np.ndarray            # standardized training matrix
    y: tuple
    k: int
    mean: np.ndarray
    scale: np.ndarray        # 0 marks a constant feature

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def standardize(self, X) -> np.ndarray:
        X = _check_matrix(X, self.n_features)
        safe = np.where(self.scale > 0, self.scale, 1.0)
        Z = (X - self.mean) / safe
        Z[:, self.scale == 0] = 0.0
        return Z

    def to_json(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": "knn", "k": self.k,
                "mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "X": self.X.tolist(), "y": [_plain(v) for v in self.y]}

    @classmethod
    def from_json(cls, d: dict) -> "KnnModel":
        return cls(np.asarray(d["X"], dtype=float).reshape(len(d["y"]), -1), tuple(d["y"]), int(d["k"]),
                   np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def knn_fit(X, y: Sequence, k: int = 5, seed: int = 0) -> KnnModel:
    """Store the standardized training set. ``seed`` is accepted for a uniform
    learner interface; fitting is deterministic."""
    X = _check_matrix(X)
    if len(y) != X.shape[0]:
        raise ValueError("X and y differ in length")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > X.shape[0]:
        raise ValueError(f"k={k} exceeds training size {X.shape[0]}")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 0.0)
    model = KnnModel(np.empty((0, X.shape[1])), (), k, mean, scale)
    return KnnModel(model.standardize(X), tuple(_plain(v) for v in y), k, mean, scale)


def _knn_vote(labels: list, dists: np.ndarray):
    tally: dict = {}
    for lab, dist in zip(labels, dists):
        c, s = tally.get(lab, (0, 0.0))
        tally[lab] = (c + 1, s + dist)
    # most votes, then smallest mean distance, then label order
    return min(tally, key=lambda lab: (-tally[lab][0], tally[lab][1] / tally[lab][0], lab))


def knn_neighbors(model: KnnModel, X, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the k nearest training points per query."""
    Z = model.standardize(X)
    idx = np.empty((Z.shape[0], model.k), dtype=np.int64)
    dist = np.empty((Z.shape[0], model.k))
    for lo in range(0, Z.shape[0], chunk):
        diff = Z[lo:lo + chunk, None, :] - model.X[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=2))
        order = np.argsort(d, axis=1, kind="stable")[:, :model.k]
        idx[lo:lo + chunk] = order
        dist[lo:lo + chunk] = np.take_along_axis(d, order, axis=1)
    return idx, dist


def knn_predict(model: KnnModel, X) -> list:
    """Majority label of the k nearest neighbours for every row of ``X``."""
    idx, dist = knn_neighbors(model, X)
    return [_knn_vote([model.y[j] for j in row], drow) for row, drow in zip(idx, dist)]


def knn_predict_one(model: KnnModel, x) -> object:
    return knn_predict(model, np.asarray(x, dtype=float).reshape(1, -1))[0]


# --------------------------------------------------------------------------
# decision trees and forests

class ForestMode(str, Enum):
    BAGGED = "bagged"
    EXTRA = "extra"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    max_features: Union[int, str] = "sqrt"
    mode: ForestMode = ForestMode.BAGGED

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def features_per_split(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(d)))
        if self.max_features in ("all", None):
            return d
        return max(1, min(d, int(self.max_features)))

    def to_json(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "max_features": self.max_features, "mode": self.mode.value}

    @classmethod
    def from_json(cls, d: dict) -> "ForestParams":
        return cls(int(d["n_trees"]), d.get("max_depth"), int(d.get("min_samples_leaf", 1)),
                   d.get("max_features", "sqrt"), ForestMode(d.get("mode", "bagged")))


@dataclass(frozen=True)
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf.

    ``value`` holds the class counts that reached each node and
    ``importance`` the impurity decrease credited to each feature.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importance: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active[rows] = self.feature[node[rows]] >= 0
        return node

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        # argmax picks the lowest class index on ties
        return np.argmax(self.value[self.apply(X)], axis=1)

    def to_json(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "importance": self.importance.tolist()}

    @classmethod
    def from_json(cls, d: dict, n_classes: int, n_features: int) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["value"], dtype=float).reshape(-1, n_classes),
                   np.asarray(d["importance"], dtype=float).reshape(n_features))


class _TreeBuilder:
    def __init__(self, X: np.ndarray, y: np.ndarray, n_classes: int, params: ForestParams,
                 rng: np.random.Generator):
        self.X, self.y, self.C, self.p, self.rng = X, y, n_classes, params, rng
        self.k = params.features_per_split(X.shape[1])
        self.onehot = np.eye(n_classes)[y]
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self.importance = np.zeros(X.shape[1])

    def _new_node(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts)
        return len(self.feature) - 1

    def _sorted_costs(self, Xc: np.ndarray, yn: np.ndarray, total: np.ndarray):
        """Best threshold per candidate column by exhaustive scan of sorted values."""
        n, k = Xc.shape
        order = np.argsort(Xc, axis=0, kind="stable")
        xs = np.take_along_axis(Xc, order, axis=0)
        left = np.cumsum(yn[order], axis=0)[:-1]                 # (n-1, k, C)
        nl = np.arange(1, n, dtype=float)[:, None]
        nr = n - nl
        cost = (nl - np.sum(left * left, axis=2) / nl) + (nr - np.sum((total - left) ** 2, axis=2) / nr)
        valid = xs[1:] > xs[:-1]
        m = self.p.min_samples_leaf
        if m > 1:
            valid &= (nl >= m) & (nr >= m)
        cost = np.where(valid, cost, np.inf)
        i = np.argmin(cost, axis=0)
        cols = np.arange(k)
        lo, hi = xs[i, cols], xs[i + 1, cols]
        thr = (lo + hi) / 2
        thr = np.where((lo <= thr) & (thr < hi), thr, lo)
        return cost[i, cols], thr

    def _random_costs(self, Xc: np.ndarray, yn: np.ndarray, total: np.ndarray, lo: np.ndarray, hi: np.ndarray):
        """One uniformly drawn threshold per candidate column."""
        n = Xc.shape[0]
        thr = self.rng.uniform(lo, hi)
        thr = np.where(thr < hi, thr, lo)
        go_left = Xc <= thr
        nl = go_left.sum(axis=0).astype(float)
        nr = n - nl
        left = go_left.T.astype(float) @ yn                       # (k, C)
        m = self.p.min_samples_leaf
        with np.errstate(divide="ignore", invalid="ignore"):
            cost = (nl - np.sum(left * left, axis=1) / nl) + (nr - np.sum((total - left) ** 2, axis=1) / nr)
        cost = np.where((nl >= m) & (nr >= m), cost, np.inf)
        return cost, thr

    def build(self, idx: np.ndarray) -> None:
        stack = [(idx, 0, -1, False)]
        while stack:
            rows, depth, parent, is_left = stack.pop()
            yn = self.onehot[rows]
            counts = yn.sum(axis=0)
            node = self._new_node(counts)
            if parent >= 0:
                (self.left if is_left else self.right)[parent] = node
            n = rows.size
            if (np.count_nonzero(counts) <= 1 or n < 2 * self.p.min_samples_leaf
                    or (self.p.max_depth is not None and depth >= self.p.max_depth)):
                continue
            node_cost = n - float(np.sum(counts * counts)) / n
            Xn = self.X[rows]
            lo_all, hi_all = Xn.min(axis=0), Xn.max(axis=0)
            perm = self.rng.permutation(self.X.shape[1])
            # features constant within this node do not count toward the draw budget
            usable = perm[hi_all[perm] > lo_all[perm]]
            best = None
            for start in range(0, usable.size, self.k):
                cand = usable[start:start + self.k]
                Xc = Xn[:, cand]
                if self.p.mode is ForestMode.BAGGED:
                    cost, thr = self._sorted_costs(Xc, yn, counts)
                else:
                    cost, thr = self._random_costs(Xc, yn, counts, lo_all[cand], hi_all[cand])
                j = int(np.argmin(cost))
                if np.isfinite(cost[j]):
                    best = (float(cost[j]), int(cand[j]), float(thr[j]))
                    break
            if best is None:
                continue
            cost, f, thr = best
            self.feature[node] = f
            self.threshold[node] = thr
            self.importance[f] += node_cost - cost
            go_left = Xn[:, f] <= thr
            stack.append((rows[~go_left], depth + 1, node, False))
            stack.append((rows[go_left], depth + 1, node, True))

    def finish(self) -> Tree:
        return Tree(np.asarray(self.feature, dtype=np.int64), np.asarray(self.threshold, dtype=float),
                    np.asarray(self.left, dtype=np.int64), np.asarray(self.right, dtype=np.int64),
                    np.vstack(self.value), self.importance)


def tree_fit(X: np.ndarray, y_idx: np.ndarray, n_classes: int, params: ForestParams,
             rng: np.random.Generator) -> Tree:
    n = X.shape[0]
    if params.mode is ForestMode.BAGGED:
        rows = rng.integers(0, n, size=n)
    else:
        rows = np.arange(n)
    b = _TreeBuilder(X, y_idx, n_classes, params, rng)
    b.build(rows)
    return b.finish()


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    classes: tuple
    params: ForestParams
    n_features: int
    seed: int = 0

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def to_json(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": "forest",
                "params": self.params.to_json(), "classes": [_plain(c) for c in self.classes],
                "n_features": self.n_features, "seed": self.seed,
                "trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, d: dict) -> "ForestModel":
        C, F = len(d["classes"]), int(d["n_features"])
        return cls(tuple(Tree.from_json(t, C, F) for t in d["trees"]), tuple(d["classes"]),
                   ForestParams.from_json(d["params"]), F, int(d.get("seed", 0)))


def forest_fit(X, y: Sequence, params: ForestParams = ForestParams(), seed: int = 0,
               jobs: int = 1) -> ForestModel:
    """Fit a random forest (bagged) or extremely randomized trees.

    Each tree draws from its own child of ``SeedSequence(seed)``, so the result
    does not depend on ``jobs`` or scheduling.
    """
    X = _check_matrix(X)
    y = list(y)
    if len(y) != X.shape[0]:
        raise ValueError("X and y differ in length")
    classes = _sorted_labels(y)
    if len(classes) < 2:
        raise ValueError("forest_fit needs at least two distinct labels")
    pos = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([pos[v] for v in y], dtype=np.int64)
    children = np.random.SeedSequence(int(seed)).spawn(params.n_trees)

    def one(ss):
        return tree_fit(X, y_idx, len(classes), params, np.random.default_rng(ss))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = tuple(pool.map(one, children))
    else:
        trees = tuple(one(ss) for ss in children)
    return ForestModel(trees, tuple(_plain(c) for c in classes), params, X.shape[1], int(seed))


def forest_votes(model: ForestModel, X) -> np.ndarray:
    """Per-row vote counts over classes; each row sums to the tree count."""
    X = _check_matrix(X, model.n_features)
    votes = np.zeros((X.shape[0], len(model.classes)), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for t in model.trees:
        np.add.at(votes, (rows, t.predict_index(X)), 1)
    return votes


def forest_predict(model: ForestModel, X) -> list:
    """Hard majority vote; ties go to the lowest class index."""
    return [model.classes[i] for i in np.argmax(forest_votes(model, X), axis=1)]


def forest_importances(model: ForestModel) -> np.ndarray:
    """Mean impurity decrease per feature, normalized to sum to 1."""
    acc = np.zeros(model.n_features)
    for t in model.trees:
        s = t.importance.sum()
        if s > 0:
            acc += t.importance / s
    total = acc.sum()
    return acc / total if total > 0 else np.full(model.n_features, 1.0 / model.n_features)


# --------------------------------------------------------------------------
# hidden Markov model with factorized Bernoulli emissions

@dataclass(frozen=True)
class HmmModel:
    states: tuple[str, ...]
    pi: np.ndarray
    A: np.ndarray
    emission: np.ndarray     # (states, bits): P(bit = 1 | state)
    alpha: float = 0.01

    @property
    def n_bits(self) -> int:
        return self.emission.shape[1]

    def log_emission(self, obs) -> np.ndarray:
        """(T, states) log-probability of each observation row under each state."""
        obs = np.asarray(obs, dtype=float)
        if obs.ndim != 2 or obs.shape[1] != self.n_bits:
            raise ValueError(f"observation width {obs.shape[-1] if obs.ndim else 0} does not match "
                             f"model width {self.n_bits}")
        with np.errstate(divide="ignore"):
            lp, lq = np.log(self.emission), np.log1p(-self.emission)
        ones = obs[:, None, :] == 1
        return np.where(ones, lp[None], lq[None]).sum(axis=2)

    def to_json(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": "hmm", "alpha": self.alpha,
                "states": list(self.states), "pi": self.pi.tolist(), "A": self.A.tolist(),
                "emission": self.emission.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "HmmModel":
        S = len(d["states"])
        return cls(tuple(d["states"]), np.asarray(d["pi"], dtype=float),
                   np.asarray(d["A"], dtype=float).reshape(S, S),
                   np.asarray(d["emission"], dtype=float).reshape(S, -1), float(d["alpha"]))


def _normalize_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / counts.shape[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, counts / np.where(totals > 0, totals, 1), uniform)


def hmm_fit_supervised(sequences: Sequence[tuple[Sequence[Sequence[int]], Sequence[str]]],
                       states: Sequence[str], alpha: float = 0.01) -> HmmModel:
    """Count-based estimates with additive smoothing.

    π and A come from first-label and label-bigram counts; emission
    parameters are (ones + α) / (n + 2α) per state and bit. Rows without any
    mass fall back to uniform, and Bernoulli parameters without data to 0.5.
    """
    if not sequences:
        raise ValueError("need at least one training sequence")
    if alpha < 0:
        raise ValueError("smoothing alpha must be >= 0")
    states = tuple(states)
    pos = {s: i for i, s in enumerate(states)}
    S = len(states)
    width = None
    pi_c = np.zeros(S)
    A_c = np.zeros((S, S))
    ones = None
    n = np.zeros(S)
    for obs, labels in sequences:
        obs = np.asarray(obs, dtype=float)
        if obs.ndim != 2 or obs.shape[0] != len(labels) or not len(labels):
            raise ValueError("each sequence needs one observation row per label")
        if width is None:
            width = obs.shape[1]
            ones = np.zeros((S, width))
        elif obs.shape[1] != width:
            raise ValueError("observation width differs between sequences")
        try:
            idx = np.array([pos[lab] for lab in labels])
        except KeyError as e:
            raise ValueError(f"unknown activity label {e.args[0]!r}") from None
        pi_c[idx[0]] += 1
        np.add.at(A_c, (idx[:-1], idx[1:]), 1)
        np.add.at(ones, idx, obs)
        np.add.at(n, idx, 1)
    pi = _normalize_rows(pi_c + alpha)
    A = _normalize_rows(A_c + alpha)
    den = n[:, None] + 2 * alpha
    with np.errstate(invalid="ignore", divide="ignore"):
        emission = np.where(den > 0, (ones + alpha) / np.where(den > 0, den, 1), 0.5)
    return HmmModel(states, pi, A, emission, float(alpha))


def _logs(model: HmmModel):
    with np.errstate(divide="ignore"):
        return np.log(model.pi), np.log(model.A)


def hmm_viterbi(model: HmmModel, obs) -> list[str]:
    """Most probable state path; ties go to the lower state index."""
    path, _ = hmm_viterbi_scored(model, obs)
    return path


def hmm_viterbi_scored(model: HmmModel, obs) -> tuple[list[str], float]:
    le = model.log_emission(obs)
    if le.shape[0] == 0:
        raise ValueError("empty observation sequence")
    log_pi, log_A = _logs(model)
    T, S = le.shape
    delta = log_pi + le[0]
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + log_A
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(S)] + le[t]
    best = int(np.argmax(delta))
    score = float(delta[best])
    path = [best]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return [model.states[i] for i in path], score


def _logsumexp(a: np.ndarray, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.item()


def hmm_forward(model: HmmModel, obs) -> float:
    """Total log-likelihood of the observation sequence."""
    le = model.log_emission(obs)
    if le.shape[0] == 0:
        raise ValueError("empty observation sequence")
    log_pi, log_A = _logs(model)
    a = log_pi + le[0]
    for t in range(1, le.shape[0]):
        a = _logsumexp(a[:, None] + log_A, axis=0) + le[t]
    return float(_logsumexp(a))


# --------------------------------------------------------------------------
# persistence

def model_from_json(d: dict):
    if d.get("format") != MODEL_FORMAT:
        raise ModelError("not a model document")
    if int(d.get("version", -1)) != MODEL_VERSION:
        raise ModelError(f"unsupported model version {d.get('version')!r}")
    kind = d.get("kind")
    loaders = {"knn": KnnModel.from_json, "forest": ForestModel.from_json, "hmm": HmmModel.from_json}
    if kind not in loaders:
        raise ModelError(f"unknown model kind {kind!r}")
    return loaders[kind](d)


def save_model(model, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(model.to_json(), separators=(",", ":")), encoding="utf-8")
    return p


def load_model(path: Union[str, Path]):
    p = Path(path)
    if not p.exists():
        raise ModelError(f"model file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelError(f"{p}: {e}") from None
    return model_from_json(doc)
