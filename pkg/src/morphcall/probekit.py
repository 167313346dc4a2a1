"""Linear probing classifiers and neuron-level analysis.

Two optimizers over hidden representations, both deterministic:

* multinomial logistic regression with an L2 penalty in the inverse-strength
  convention (penalty weight 1/C), solved with L-BFGS on an analytic gradient;
* elastic-net logistic regression (L1 + L2) solved with FISTA and a
  soft-threshold proximal step, used to rank individual neurons.

Objectives are per-sample scaled: mean NLL + ||W||^2 / (2*C*n) for the probe,
mean NLL + l1*||W||_1 + (l2/2)*||W||^2 for the elastic net. Biases are never
penalized. Features are standardized with train-split statistics only; sparse
inputs are scaled by the column std without centering so sparsity survives.
Analysis arithmetic is float64 regardless of storage precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse as sp
from scipy.stats import rankdata

from .repstore import RepSet, bind_repset, concat_layers, slice_layer
from .taskgen import ProbingDataset, SPLITS


@dataclass
class ProbeConfig:
    l2_grid: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)  # inverse strengths C
    max_iterations: int = 500
    tol: float = 1e-6  # gradient-norm target
    seed: int = 0


@dataclass
class NeuronProbeConfig:
    l1_grid: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    l2_grid: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    top_fraction: float = 0.2
    ranking: str = "max_abs"  # or "cumulative_mass"
    max_iterations: int = 1000
    tol: float = 1e-9  # relative objective change
    seed: int = 0


@dataclass
class Standardizer:
    mean: np.ndarray | None  # None for sparse inputs (scale-only)
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        if sp.issparse(X):
            mean = np.asarray(X.mean(axis=0)).ravel()
            mean_sq = np.asarray(X.multiply(X).mean(axis=0)).ravel()
            var = np.maximum(mean_sq - mean ** 2, 0.0)
            scale = np.sqrt(var)
            scale[scale == 0.0] = 1.0
            return cls(mean=None, scale=scale)
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(mean=mean, scale=scale)

    def transform(self, X):
        if sp.issparse(X):
            return X @ sp.diags(1.0 / self.scale)
        X = np.asarray(X, dtype=np.float64)
        if self.mean is not None:
            X = X - self.mean
        return X / self.scale


@dataclass
class LinearProbe:
    weights: np.ndarray  # [k, d]
    bias: np.ndarray     # [k]
    classes: int
    standardizer: Standardizer
    regularization: dict
    objective: float


@dataclass
class LayerResult:
    layer: int
    chosen_reg: float
    val_auc: float
    test_auc: float


@dataclass
class ProbeResult:
    task: str
    language: str
    model_id: str
    instance: str
    pooling: str
    layers: list[LayerResult] = field(default_factory=list)

    def layer_average(self) -> float:
        return float(np.mean([row.test_auc for row in self.layers]))

    def to_json_dict(self) -> dict:
        return {
            "task": self.task, "language": self.language,
            "model_id": self.model_id, "instance": self.instance,
            "pooling": self.pooling,
            "layers": [{"layer": r.layer, "chosen_reg": r.chosen_reg,
                        "val_auc": r.val_auc, "test_auc": r.test_auc}
                       for r in self.layers],
            "layer_average": self.layer_average(),
        }

    def to_csv_rows(self) -> list[list]:
        return [[r.layer, r.chosen_reg, r.val_auc, r.test_auc] for r in self.layers]


@dataclass
class NeuronReport:
    task: str
    language: str
    model_id: str
    instance: str
    n_layers: int
    hidden_size: int
    saliency: np.ndarray
    top_set: np.ndarray
    per_layer_counts: np.ndarray
    chosen_l1: float
    chosen_l2: float
    val_auc: float
    test_auc: float

    def to_json_dict(self) -> dict:
        return {
            "task": self.task, "language": self.language,
            "model_id": self.model_id, "instance": self.instance,
            "n_layers": self.n_layers, "hidden_size": self.hidden_size,
            "chosen_l1": self.chosen_l1, "chosen_l2": self.chosen_l2,
            "val_auc": self.val_auc, "test_auc": self.test_auc,
            "top_set": [int(i) for i in self.top_set],
            "per_layer_counts": [int(c) for c in self.per_layer_counts],
            "saliency": [float(s) for s in self.saliency],
        }

    def to_csv_rows(self) -> list[list]:
        return [[layer, int(count)] for layer, count in enumerate(self.per_layer_counts)]


def _check_inputs(X, y, k: int) -> np.ndarray:
    y = np.asarray(y)
    if sp.issparse(X):
        if not np.all(np.isfinite(X.data)):
            raise ValueError("non-finite values in feature matrix")
    elif not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in feature matrix")
    if len(np.unique(y)) < 2:
        raise ValueError("labels contain a single class")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"labels outside [0, {k})")
    n = X.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} samples, got {n}")
    return y.astype(np.int64)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _mean_nll_grad(W: np.ndarray, b: np.ndarray, X, Y: np.ndarray):
    """Mean negative log-likelihood and its gradients; X may be sparse."""
    n = X.shape[0]
    logits = X @ W.T + b
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    nll = -float((Y * log_probs).sum()) / n
    P = np.exp(log_probs)
    delta = (P - Y) / n
    grad_W = np.asarray((X.T @ delta)).T
    grad_b = delta.sum(axis=0)
    return nll, grad_W, grad_b


def logreg_objective_grad(W: np.ndarray, b: np.ndarray, X, y: np.ndarray, C: float):
    """Value and gradient of the probe objective (L2 in the 1/C convention)."""
    k = W.shape[0]
    Y = np.zeros((X.shape[0], k))
    Y[np.arange(X.shape[0]), np.asarray(y, dtype=np.int64)] = 1.0
    nll, grad_W, grad_b = _mean_nll_grad(W, b, X, Y)
    n = X.shape[0]
    reg = 1.0 / (2.0 * C * n)
    value = nll + reg * float((W * W).sum())
    grad_W = grad_W + (2.0 * reg) * W
    return value, grad_W, grad_b


def elastic_objective_grad(W: np.ndarray, b: np.ndarray, X, y: np.ndarray,
                           l1: float, l2: float):
    """Value and (sub)gradient of the elastic-net objective; the L1 term uses
    sign(W), valid wherever no weight sits exactly at zero."""
    k = W.shape[0]
    Y = np.zeros((X.shape[0], k))
    Y[np.arange(X.shape[0]), np.asarray(y, dtype=np.int64)] = 1.0
    nll, grad_W, grad_b = _mean_nll_grad(W, b, X, Y)
    value = nll + l1 * float(np.abs(W).sum()) + 0.5 * l2 * float((W * W).sum())
    grad_W = grad_W + l1 * np.sign(W) + l2 * W
    return value, grad_W, grad_b


def fit_logreg(X, y, C: float, config: ProbeConfig | None = None,
               k: int | None = None, standardize: bool = True) -> LinearProbe:
    """Train the multinomial probe; deterministic (zero init, convex)."""
    config = config or ProbeConfig()
    if k is None:
        k = int(np.max(y)) + 1
    k = max(k, 2)
    y = _check_inputs(X, y, k)
    standardizer = Standardizer.fit(X) if standardize else Standardizer(
        mean=None, scale=np.ones(X.shape[1]))
    Xs = standardizer.transform(X)
    n, d = Xs.shape
    Y = np.zeros((n, k))
    Y[np.arange(n), y] = 1.0
    reg = 1.0 / (2.0 * C * n)

    def fun(theta: np.ndarray):
        W = theta[:k * d].reshape(k, d)
        b = theta[k * d:]
        nll, grad_W, grad_b = _mean_nll_grad(W, b, Xs, Y)
        value = nll + reg * float((W * W).sum())
        grad_W = grad_W + (2.0 * reg) * W
        return value, np.concatenate([grad_W.ravel(), grad_b])

    result = scipy.optimize.minimize(
        fun, np.zeros(k * d + k), jac=True, method="L-BFGS-B",
        options={"maxiter": config.max_iterations, "gtol": config.tol,
                 "ftol": 1e-14})
    W = result.x[:k * d].reshape(k, d)
    b = result.x[k * d:]
    return LinearProbe(weights=W, bias=b, classes=k, standardizer=standardizer,
                       regularization={"C": C}, objective=float(result.fun))


def fit_elastic_net(X, y, l1: float, l2: float,
                    config: NeuronProbeConfig | None = None,
                    k: int | None = None, standardize: bool = True) -> LinearProbe:
    """Train the elastic-net probe with FISTA (bias unpenalized)."""
    config = config or NeuronProbeConfig()
    if k is None:
        k = int(np.max(y)) + 1
    k = max(k, 2)
    y = _check_inputs(X, y, k)
    standardizer = Standardizer.fit(X) if standardize else Standardizer(
        mean=None, scale=np.ones(X.shape[1]))
    Xs = standardizer.transform(X)
    n, d = Xs.shape
    Y = np.zeros((n, k))
    Y[np.arange(n), y] = 1.0

    def smooth(W: np.ndarray, b: np.ndarray):
        nll, grad_W, grad_b = _mean_nll_grad(W, b, Xs, Y)
        value = nll + 0.5 * l2 * float((W * W).sum())
        return value, grad_W + l2 * W, grad_b

    def full_value(W: np.ndarray, b: np.ndarray) -> float:
        value, _, _ = smooth(W, b)
        return value + l1 * float(np.abs(W).sum())

    W = np.zeros((k, d))
    b = np.zeros(k)
    zW, zb = W.copy(), b.copy()
    t = 1.0
    lipschitz = 1.0
    previous = full_value(W, b)
    for _ in range(config.max_iterations):
        f_z, g_zW, g_zb = smooth(zW, zb)
        while True:
            step = 1.0 / lipschitz
            cand_W = zW - step * g_zW
            if l1 > 0:
                cand_W = np.sign(cand_W) * np.maximum(np.abs(cand_W) - step * l1, 0.0)
            cand_b = zb - step * g_zb
            diff_W, diff_b = cand_W - zW, cand_b - zb
            quad = (f_z + float((g_zW * diff_W).sum()) + float(g_zb @ diff_b)
                    + 0.5 * lipschitz * (float((diff_W * diff_W).sum())
                                         + float(diff_b @ diff_b)))
            f_cand, _, _ = smooth(cand_W, cand_b)
            if f_cand <= quad + 1e-12 or lipschitz > 1e12:
                break
            lipschitz *= 2.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        zW = cand_W + ((t - 1.0) / t_next) * (cand_W - W)
        zb = cand_b + ((t - 1.0) / t_next) * (cand_b - b)
        W, b, t = cand_W, cand_b, t_next
        current = full_value(W, b)
        if abs(previous - current) <= config.tol * max(1.0, abs(previous)):
            break
        previous = current

    return LinearProbe(weights=W, bias=b, classes=k, standardizer=standardizer,
                       regularization={"l1": l1, "l2": l2},
                       objective=full_value(W, b))


def predict_scores(probe: LinearProbe, X) -> np.ndarray:
    """[n, k] softmax class probabilities; rows sum to one."""
    if X.shape[1] != probe.weights.shape[1]:
        raise ValueError(f"feature dimension {X.shape[1]} does not match probe "
                         f"dimension {probe.weights.shape[1]}")
    Xs = probe.standardizer.transform(X)
    logits = np.asarray(Xs @ probe.weights.T + probe.bias)
    return _softmax(logits)


def roc_auc(scores, labels) -> float:
    """Rank-statistic ROC-AUC with midrank tie handling: equals
    P(score+ > score-) + 0.5 * P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def macro_ovr_auc(scores: np.ndarray, labels) -> float:
    """Unweighted one-vs-rest ROC-AUC mean over classes; binary input reduces
    to the plain AUC on class-1 scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    k = scores.shape[1]
    present = np.unique(labels)
    if len(present) < k or present.min() < 0 or present.max() >= k:
        raise ValueError(f"macro AUC needs every class in [0, {k}) present")
    per_class = [roc_auc(scores[:, c], (labels == c).astype(int)) for c in range(k)]
    return float(np.mean(per_class))


def split_indices(dataset: ProbingDataset) -> dict[str, np.ndarray]:
    """Row indices per split, in dataset (= repset) order."""
    table: dict[str, list[int]] = {split: [] for split in SPLITS}
    for row, inst in enumerate(dataset.instances):
        table[inst.split].append(row)
    empty = [split for split, rows in table.items() if not rows]
    if empty:
        raise ValueError(f"empty split(s): {', '.join(empty)}")
    return {split: np.asarray(rows, dtype=np.int64) for split, rows in table.items()}


def _tune_l2(X_train, y_train, X_val, y_val, k: int,
             config: ProbeConfig) -> tuple[float, float, LinearProbe]:
    """Pick C maximizing validation macro-OVR AUC; ties go to the smallest C."""
    best = None
    for C in sorted(config.l2_grid):
        probe = fit_logreg(X_train, y_train, C, config, k=k)
        val = macro_ovr_auc(predict_scores(probe, X_val), y_val)
        if best is None or val > best[1]:
            best = (C, val, probe)
    return best


def layer_sweep(dataset: ProbingDataset, repset: RepSet,
                config: ProbeConfig | None = None) -> ProbeResult:
    """Per-layer probe protocol: fit on train for every C, tune on validation,
    report the test macro-OVR AUC of the chosen C."""
    config = config or ProbeConfig()
    bind_repset(repset, dataset)
    idx = split_indices(dataset)
    y = np.asarray([inst.label for inst in dataset.instances], dtype=np.int64)
    k = dataset.arity

    result = ProbeResult(task=dataset.task, language=dataset.language,
                         model_id=repset.header.model_id,
                         instance=repset.header.instance,
                         pooling=repset.header.pooling)
    for layer in range(repset.header.n_layers):
        X = np.asarray(slice_layer(repset, layer), dtype=np.float64)
        C, val, probe = _tune_l2(X[idx["train"]], y[idx["train"]],
                                 X[idx["dev"]], y[idx["dev"]], k, config)
        test = macro_ovr_auc(predict_scores(probe, X[idx["test"]]), y[idx["test"]])
        result.layers.append(LayerResult(layer=layer, chosen_reg=C,
                                         val_auc=val, test_auc=test))
    return result


def rank_neurons(probe: LinearProbe) -> tuple[np.ndarray, np.ndarray]:
    """Saliency per input coordinate (max over classes of |weight|, normalized
    to sum 1) and the coordinate order by descending saliency, index tiebreak."""
    saliency = np.abs(probe.weights).max(axis=0)
    total = saliency.sum()
    if total > 0:
        saliency = saliency / total
    order = np.lexsort((np.arange(saliency.size), -saliency))
    return saliency, order


def top_neurons(saliency: np.ndarray, fraction: float = 0.2) -> np.ndarray:
    """Indices of the ceil(fraction * d) most salient coordinates."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    d = saliency.size
    m = math.ceil(fraction * d)
    order = np.lexsort((np.arange(d), -saliency))
    return np.sort(order[:m])


def top_neurons_cumulative(weights: np.ndarray, mass: float = 0.2) -> np.ndarray:
    """Alternative selection: per class, the minimal |weight|-descending prefix
    holding `mass` of that class's total |weight|; union over classes."""
    selected: set[int] = set()
    for row in np.abs(weights):
        total = row.sum()
        if total == 0:
            continue
        order = np.lexsort((np.arange(row.size), -row))
        cum = np.cumsum(row[order])
        cutoff = int(np.searchsorted(cum, mass * total)) + 1
        selected.update(int(i) for i in order[:cutoff])
    return np.asarray(sorted(selected), dtype=np.int64)


def per_layer_counts(top_set: np.ndarray, n_layers: int, hidden_size: int) -> np.ndarray:
    """Counts of selected neurons per layer; neuron j lives in layer
    j // hidden_size."""
    layers = np.asarray(top_set, dtype=np.int64) // hidden_size
    if layers.size and (layers.min() < 0 or layers.max() >= n_layers):
        raise ValueError("neuron index outside the concatenated range")
    return np.bincount(layers, minlength=n_layers)


def neuron_report(dataset: ProbingDataset, repset: RepSet,
                  config: NeuronProbeConfig | None = None) -> NeuronReport:
    """Elastic-net probe over all-layer concatenated representations, tuned on
    validation macro-OVR AUC over the l1 x l2 grid (ties keep the earlier,
    more regularized grid point)."""
    config = config or NeuronProbeConfig()
    bind_repset(repset, dataset)
    idx = split_indices(dataset)
    y = np.asarray([inst.label for inst in dataset.instances], dtype=np.int64)
    k = dataset.arity
    X = np.asarray(concat_layers(repset), dtype=np.float64)

    best = None
    for l1 in config.l1_grid:
        for l2 in config.l2_grid:
            probe = fit_elastic_net(X[idx["train"]], y[idx["train"]], l1, l2,
                                    config, k=k)
            val = macro_ovr_auc(predict_scores(probe, X[idx["dev"]]), y[idx["dev"]])
            if best is None or val > best[2]:
                best = (l1, l2, val, probe)
    l1, l2, val, probe = best
    test = macro_ovr_auc(predict_scores(probe, X[idx["test"]]), y[idx["test"]])

    saliency, _ = rank_neurons(probe)
    if config.ranking == "cumulative_mass":
        top = top_neurons_cumulative(probe.weights, config.top_fraction)
    else:
        top = top_neurons(saliency, config.top_fraction)
    counts = per_layer_counts(top, repset.header.n_layers, repset.header.hidden_size)
    return NeuronReport(task=dataset.task, language=dataset.language,
                        model_id=repset.header.model_id,
                        instance=repset.header.instance,
                        n_layers=repset.header.n_layers,
                        hidden_size=repset.header.hidden_size,
                        saliency=saliency, top_set=top, per_layer_counts=counts,
                        chosen_l1=l1, chosen_l2=l2, val_auc=val, test_auc=test)
