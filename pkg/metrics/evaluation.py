import logging

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans
from sklearn.metrics import accuracy_score, adjusted_rand_score, f1_score, roc_auc_score

logger = logging.getLogger("Metrics")


def _select(preds, labels, mask):
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"predictions {preds.shape} and labels {labels.shape} differ in shape")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        preds, labels = preds[mask], labels[mask]
    if labels.size == 0:
        raise ValueError("metric over an empty selection")
    return preds, labels


def accuracy(preds, labels, mask=None):
    preds, labels = _select(preds, labels, mask)
    return float(accuracy_score(labels, preds))


def macro_f1(preds, labels, mask=None):
    """
    Unweighted mean of per-class F1 over the classes that occur in the
    selected labels or predictions.
    """
    preds, labels = _select(preds, labels, mask)
    return float(f1_score(labels, preds, average="macro", zero_division=0))


def micro_f1(preds, labels, mask=None):
    preds, labels = _select(preds, labels, mask)
    return float(f1_score(labels, preds, average="micro", zero_division=0))


def classification_report(preds, labels, mask=None):
    """Accuracy, macro F1 and micro F1 in one dict."""
    return {
        "accuracy": accuracy(preds, labels, mask),
        "macro_f1": macro_f1(preds, labels, mask),
        "micro_f1": micro_f1(preds, labels, mask),
    }


def _rows(alpha, valid):
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2:
        raise ValueError(f"relevance matrix must be M×K, got shape {alpha.shape}")
    if valid is not None:
        alpha = alpha[np.asarray(valid, dtype=bool)]
    return alpha


def pearson_factor_correlation(alpha, valid=None):
    """
    Pearson correlation between the factor columns of α over hyperedges.

    Args:
        alpha (array-like): M×K relevance scores
        valid (array-like): Optional boolean row mask (e.g. non-empty hyperedges)

    Returns:
        tuple: (K×K correlation matrix, K boolean flags marking zero-variance columns)
    """
    alpha = _rows(alpha, valid)
    centered = alpha - alpha.mean(axis=0) if alpha.shape[0] else alpha
    norms = np.sqrt((centered ** 2).sum(axis=0))
    flat = norms <= 1e-15 * max(1.0, np.abs(alpha).max(initial=0.0)) * np.sqrt(max(alpha.shape[0], 1))
    safe = np.where(flat, 1.0, norms)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr[flat, :] = 0.0
    corr[:, flat] = 0.0
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    if flat.any():
        logger.warning(f"Zero-variance relevance columns {np.flatnonzero(flat).tolist()}; correlation set to 0")
    return corr, flat


def mean_abs_offdiagonal(matrix):
    """Mean |entry| off the diagonal (0 for a 1×1 matrix)."""
    matrix = np.asarray(matrix)
    k = matrix.shape[0]
    if k < 2:
        return 0.0
    return float(np.abs(matrix[~np.eye(k, dtype=bool)]).mean())


def relevance_similarity(alpha_i, alpha_j):
    """1 / (1 + ‖α_i − α_j‖₂)."""
    diff = np.asarray(alpha_i, dtype=np.float64) - np.asarray(alpha_j, dtype=np.float64)
    return float(1.0 / (1.0 + np.linalg.norm(diff)))


def pairwise_relevance_similarity(alpha):
    """M×M matrix of relevance_similarity between every pair of hyperedges."""
    alpha = _rows(alpha, None)
    return 1.0 / (1.0 + cdist(alpha, alpha, metric="euclidean"))


def cluster_similarity(clusters, alpha):
    """
    Mean relevance similarity between hyperedge clusters.

    Off-diagonal entry (a, b) averages over all cross pairs; the diagonal
    averages over distinct within-cluster pairs (1 for singletons).

    Args:
        clusters (list): Lists of hyperedge indices, one per cluster
        alpha (array-like): M×K relevance scores

    Returns:
        numpy.ndarray: Symmetric C×C matrix
    """
    if any(len(c) == 0 for c in clusters):
        raise ValueError("clusters must be non-empty")
    sims = pairwise_relevance_similarity(alpha)
    groups = [np.asarray(c, dtype=np.int64) for c in clusters]
    size = len(groups)
    out = np.zeros((size, size))
    for a in range(size):
        block = sims[np.ix_(groups[a], groups[a])]
        n = groups[a].size
        out[a, a] = 1.0 if n == 1 else (block.sum() - np.trace(block)) / (n * (n - 1))
        for b in range(a + 1, size):
            out[a, b] = out[b, a] = sims[np.ix_(groups[a], groups[b])].mean()
    return out


def _symmetric_auc(truth, scores):
    auc = roc_auc_score(truth, scores)
    return max(auc, 1.0 - auc), auc >= 0.5


def _column_auc(alpha, truth, select, score):
    """Pick the best column (and orientation) on `select`, report its AUC on `score`."""
    best, best_col, best_sign = -1.0, 0, True
    for col in range(alpha.shape[1]):
        auc, sign = _symmetric_auc(truth[select], alpha[select, col])
        if auc > best:
            best, best_col, best_sign = auc, col, sign
    held = roc_auc_score(truth[score], alpha[score, best_col])
    return (held if best_sign else 1.0 - held), best_col


def factor_recovery_score(alpha, planted, seed=0, val_fraction=0.5, restarts=10, valid=None):
    """
    How well α separates the planted hyperedge factor types.

    AUC: the α column (and orientation) that best separates a planted type is
    chosen on a random validation subset of hyperedges and scored on the
    rest; with more than two planted types the one-vs-rest AUCs are averaged.
    ARI: k-means with k = number of planted types on α rows, best of
    `restarts` initialisations.

    Args:
        alpha (array-like): M×K relevance scores
        planted (array-like): M planted factor ids
        seed (int): Seed for the validation split and k-means
        val_fraction (float): Share of hyperedges used for column selection
        restarts (int): k-means initialisations
        valid (array-like): Optional boolean mask of hyperedges to include

    Returns:
        dict: {'auc': float, 'ari': float, 'columns': list of chosen columns}
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    planted = np.asarray(planted, dtype=np.int64)
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        alpha, planted = alpha[valid], planted[valid]
    types = np.unique(planted)
    if types.size < 2:
        logger.warning("Factor recovery needs at least two planted types; returning NaN")
        return {"auc": float("nan"), "ari": float("nan"), "columns": []}

    rng = np.random.default_rng(seed)
    order = rng.permutation(planted.size)
    cut = min(max(int(round(val_fraction * planted.size)), 1), planted.size - 1)
    select, score = order[:cut], order[cut:]

    targets = types[1:] if types.size == 2 else types
    aucs, columns = [], []
    for t in targets:
        truth = (planted == t).astype(np.int64)
        sel, sc = select, score
        if np.unique(truth[sel]).size < 2 or np.unique(truth[sc]).size < 2:
            logger.warning(f"Validation split lacks both classes for planted type {t}; selecting on all hyperedges")
            sel = sc = np.arange(planted.size)
        auc, col = _column_auc(alpha, truth, sel, sc)
        aucs.append(auc)
        columns.append(int(col))

    kmeans = KMeans(n_clusters=int(types.size), n_init=restarts, random_state=seed)
    clusters = kmeans.fit_predict(alpha)
    ari = adjusted_rand_score(planted, clusters)
    result = {"auc": float(np.mean(aucs)), "ari": float(ari), "columns": columns}
    logger.info(f"Factor recovery: AUC {result['auc']:.3f}, ARI {result['ari']:.3f}")
    return result
