"""Local prediction explanations for black-box classifiers.

Two explainers produce per-feature attributions for a single query: a local
linear surrogate fitted on Gaussian perturbations (LIME-style) and Kernel
SHAP with background-marginalized coalition values. `exact_shapley` is an
independent brute-force oracle used to cross-check the Kernel SHAP solver.

Models only need `predict(x) -> class index` and `predict_proba(X) -> (n, k)
probabilities`; background data may be a Dataset or a plain feature matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

#: Sentinel for ShapConfig.coalition_budget requesting full enumeration.
EXACT = "exact"

#: Full enumeration is capped at this many features (2**M grows too fast).
EXACT_FEATURE_LIMIT = 16

#: Brute-force Shapley oracle cap.
ORACLE_FEATURE_LIMIT = 10

_PREDICT_CHUNK = 200_000  # rows per predict_proba call during marginalization


@dataclass(frozen=True)
class Explanation:
    """Attributions for one query: one weight per feature plus the surrogate
    intercept (LIME) or base value (SHAP)."""

    attributions: np.ndarray
    intercept_or_base: float
    explained_class: int
    explainer: str


@dataclass(frozen=True)
class LimeConfig:
    """Settings for the local linear surrogate.

    `kernel_width` of None means 0.75 * sqrt(feature count). When any
    background feature has zero spread the design matrix is rank-deficient,
    so `ridge_strength` must stay positive.
    """

    num_samples: int = 2000
    kernel_width: float | None = None
    ridge_strength: float = 1e-3
    perturbation_scale: float = 1.0
    seed: int = 0
    explained_class: int | None = None


@dataclass(frozen=True)
class ShapConfig:
    """Settings for Kernel SHAP.

    `coalition_budget` is either a sample count or EXACT; EXACT enumerates
    every proper coalition and requires at most 16 features. Integer budgets
    large enough to cover full enumeration enumerate instead of sampling.
    """

    background: object = None
    coalition_budget: object = 2048
    seed: int = 0
    explained_class: int | None = None


def _as_matrix(background) -> np.ndarray:
    if background is None:
        raise ConfigError("a background dataset is required")
    if hasattr(background, "feature_matrix"):
        mat = background.feature_matrix()
    else:
        mat = np.asarray(background, dtype=float)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise DataError("background must be a non-empty 2-D feature matrix")
    return mat


def _explained_class(m, x, override, n_classes) -> int:
    cls = m.predict(x) if override is None else int(override)
    if not 0 <= cls < n_classes:
        raise ConfigError(f"explained class {cls} out of range for {n_classes} classes")
    return cls


def _weighted_ridge(Z, y, w, lam):
    """Weighted ridge with an unpenalized intercept column."""
    n, m = Z.shape
    A = np.column_stack([Z, np.ones(n)])
    Aw = A * w[:, None]
    G = A.T @ Aw
    G[np.arange(m), np.arange(m)] += lam
    b = Aw.T @ y
    try:
        beta = np.linalg.solve(G, b)
    except np.linalg.LinAlgError:
        beta = np.linalg.lstsq(G, b, rcond=None)[0]
    return beta[:-1], float(beta[-1])


def lime_explain(m, x, cfg: LimeConfig, background) -> Explanation:
    """Fit a weighted linear surrogate around `x` and return its coefficients.

    Perturbations are Gaussian around `x` with per-feature spread
    `perturbation_scale` times the background standard deviation. Sample
    weights decay as exp(-d^2 / kernel_width^2) in sigma-scaled Euclidean
    distance. The surrogate regresses the model's predicted probability of
    the explained class.
    """
    x = np.asarray(x, dtype=float)
    M = x.size
    bg = _as_matrix(background)
    if bg.shape[1] != M:
        raise DataError(f"background has {bg.shape[1]} features, query has {M}")
    if cfg.num_samples < M + 2:
        raise ConfigError(f"num_samples must be at least {M + 2}, got {cfg.num_samples}")
    with np.errstate(invalid="ignore"):
        sigma = np.array(
            [c[~np.isnan(c)].std() if (~np.isnan(c)).any() else 0.0 for c in bg.T]
        )
    if (sigma == 0).any() and cfg.ridge_strength <= 0:
        raise ConfigError(
            "a background feature has zero spread; ridge_strength must be positive"
        )
    if cfg.ridge_strength < 0:
        raise ConfigError("ridge_strength must be non-negative")
    width = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * math.sqrt(M)
    if width <= 0:
        raise ConfigError("kernel_width must be positive")

    rng = np.random.default_rng(cfg.seed)
    Z = x + rng.standard_normal((cfg.num_samples, M)) * (cfg.perturbation_scale * sigma)
    probs = m.predict_proba(Z)
    cls = _explained_class(m, x, cfg.explained_class, probs.shape[1])
    y = probs[:, cls]

    scaled = np.where(sigma > 0, (Z - x) / np.where(sigma > 0, sigma, 1.0), 0.0)
    d2 = np.sum(scaled * scaled, axis=1)
    w = np.exp(-d2 / (width * width))
    coef, intercept = _weighted_ridge(Z, y, w, cfg.ridge_strength)
    return Explanation(coef, intercept, cls, "lime")


# ---------------------------------------------------------------------------
# Kernel SHAP


def _masks_from_ints(ints: np.ndarray, M: int) -> np.ndarray:
    return ((ints[:, None] >> np.arange(M)) & 1).astype(bool)


def _coalition_values(m, x, masks, bg, cls) -> np.ndarray:
    """Mean model output with absent features replaced by background rows."""
    C = masks.shape[0]
    B = bg.shape[0]
    values = np.empty(C)
    step = max(1, _PREDICT_CHUNK // B)
    for start in range(0, C, step):
        chunk = masks[start : start + step]
        rep = np.repeat(chunk, B, axis=0)
        X = np.where(rep, x, np.tile(bg, (chunk.shape[0], 1)))
        p = m.predict_proba(X)[:, cls]
        values[start : start + step] = p.reshape(chunk.shape[0], B).mean(axis=1)
    return values


def _kernel_weight(M: int, sizes: np.ndarray) -> np.ndarray:
    comb = np.array([math.comb(M, int(s)) for s in sizes], dtype=float)
    return (M - 1) / (comb * sizes * (M - sizes))


def _sample_coalitions(M, budget, rng):
    sizes = np.arange(1, M)
    mass = (M - 1) / (sizes * (M - sizes))  # kernel mass aggregated per size
    p = mass / mass.sum()
    drawn = rng.choice(sizes, size=budget, p=p)
    ints = np.empty(budget, dtype=np.int64)
    for i, s in enumerate(drawn):
        members = rng.choice(M, size=int(s), replace=False)
        ints[i] = int(np.sum(1 << members.astype(np.int64)))
    uniq, counts = np.unique(ints, return_counts=True)
    return _masks_from_ints(uniq, M), counts.astype(float)


def shap_explain(m, x, cfg: ShapConfig) -> Explanation:
    """Kernel SHAP attributions for one query.

    Coalition values marginalize absent features over the background; the
    weighted least-squares solve eliminates one unknown so that the
    attributions satisfy sum(phi) = f(x) - f0 exactly, where f0 is the mean
    prediction over the background.
    """
    x = np.asarray(x, dtype=float)
    M = x.size
    bg = _as_matrix(cfg.background)
    if bg.shape[1] != M:
        raise DataError(f"background has {bg.shape[1]} features, query has {M}")

    bg_probs = m.predict_proba(bg)
    cls = _explained_class(m, x, cfg.explained_class, bg_probs.shape[1])
    f0 = float(bg_probs[:, cls].mean())
    fx = float(m.predict_proba(x[None, :])[0, cls])

    if M == 1:
        return Explanation(np.array([fx - f0]), f0, cls, "shap")

    budget = cfg.coalition_budget
    total = (1 << M) - 2
    if budget == EXACT:
        if M > EXACT_FEATURE_LIMIT:
            raise ConfigError(
                f"exact enumeration supports at most {EXACT_FEATURE_LIMIT} features, got {M}"
            )
        exact = True
    elif isinstance(budget, (int, np.integer)) and not isinstance(budget, bool):
        if budget < M + 2:
            raise ConfigError(f"coalition_budget must be at least {M + 2}, got {budget}")
        exact = total <= budget
    else:
        raise ConfigError(f"coalition_budget must be a positive int or EXACT, got {budget!r}")

    if exact:
        ints = np.arange(1, (1 << M) - 1, dtype=np.int64)
        masks = _masks_from_ints(ints, M)
        weights = _kernel_weight(M, masks.sum(axis=1))
    else:
        rng = np.random.default_rng(cfg.seed)
        masks, weights = _sample_coalitions(M, int(budget), rng)

    v = _coalition_values(m, x, masks, bg, cls)

    # eliminate the last attribution through the additivity constraint
    z_last = masks[:, -1].astype(float)
    D = masks[:, :-1].astype(float) - z_last[:, None]
    t = v - f0 - z_last * (fx - f0)
    sw = np.sqrt(weights)
    beta = np.linalg.lstsq(D * sw[:, None], t * sw, rcond=None)[0]
    phi = np.append(beta, (fx - f0) - beta.sum())
    return Explanation(phi, f0, cls, "shap")


# ---------------------------------------------------------------------------
# Brute-force oracle


def exact_shapley(m, x, background) -> np.ndarray:
    """Exact Shapley values of the background-marginalized prediction game.

    Sums over all 2**M coalitions, so M is capped at 10. Serves as an
    independent oracle for `shap_explain`; the two share no solver code.
    """
    x = np.asarray(x, dtype=float)
    M = x.size
    if M > ORACLE_FEATURE_LIMIT:
        raise ConfigError(
            f"exact_shapley supports at most {ORACLE_FEATURE_LIMIT} features, got {M}"
        )
    bg = _as_matrix(background)
    if bg.shape[1] != M:
        raise DataError(f"background has {bg.shape[1]} features, query has {M}")
    cls = _explained_class(m, x, None, m.predict_proba(bg).shape[1])

    n_masks = 1 << M
    B = bg.shape[0]
    # value of every coalition, computed directly
    values = np.empty(n_masks)
    step = max(1, _PREDICT_CHUNK // B)
    all_ints = np.arange(n_masks, dtype=np.int64)
    for start in range(0, n_masks, step):
        ints = all_ints[start : start + step]
        present = ((ints[:, None] >> np.arange(M)) & 1).astype(bool)
        rep = np.repeat(present, B, axis=0)
        X = np.where(rep, x, np.tile(bg, (ints.size, 1)))
        p = m.predict_proba(X)[:, cls]
        values[start : start + step] = p.reshape(ints.size, B).mean(axis=1)

    sizes = np.array([int(i).bit_count() for i in range(n_masks)])
    fact = [math.factorial(s) for s in range(M + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[M - s - 1] / fact[M] for s in range(M)]
    )

    phi = np.zeros(M)
    for i in range(M):
        bit = 1 << i
        without = all_ints[(all_ints & bit) == 0]
        w = weight_by_size[sizes[without]]
        phi[i] = float(np.sum(w * (values[without | bit] - values[without])))
    return phi
