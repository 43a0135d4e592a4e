"""Learnability gates: off-the-shelf classifiers fitted straight on the planted signal."""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold, cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from ..errors import DataError


def _logit(C: float = 1.0, penalty: str = "l2"):
    solver = "liblinear" if penalty == "l1" else "lbfgs"
    return make_pipeline(StandardScaler(), LogisticRegression(C=C, penalty=penalty, solver=solver,
                                                              max_iter=5000))


def drift_sign_oracle(earnings, signal, folds: int = 5, seed: int = 0) -> float:
    """Cross-validated accuracy of predicting ``sign(s(e))`` from earnings.

    One row per announcement; an L1 logistic model, since only a few
    metrics should matter.  Returns the mean held-out accuracy.
    """
    X = np.asarray(earnings, dtype=np.float64)
    y = (np.asarray(signal) > 0).astype(int)
    if np.isnan(signal).any():
        raise DataError("drift-sign oracle needs planted signal values")
    if len(np.unique(y)) < 2:
        raise DataError("drift-sign oracle needs both drift signs present")
    cv = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return float(cross_val_score(_logit(1.0, "l1"), X, y, cv=cv).mean())


def announcement_table(samples, offset: int = 1):
    """Unique ``(earnings, signal)`` rows for announcements with a day at ``offset``."""
    rows = np.flatnonzero(samples.offset == offset)
    return samples.earnings[rows], samples.signal[rows]


def movement_oracle_by_day(samples, days=(1, 2, 3, 4, 5), max_per_day: int = 20000,
                           test_fraction: float = 0.4, seed: int = 0) -> dict:
    """Held-out accuracy of an earnings-only movement classifier per day offset.

    Features are the announcement's earnings metrics, labels the window's
    movement class; a proxy for how much label information the planted
    signal carries on each day.
    """
    out = {}
    rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    offs = samples.sample_offset
    X = samples.earnings[samples.day_row]
    for d in days:
        idx = np.flatnonzero(offs == d)
        if len(idx) == 0:
            continue
        if len(idx) > max_per_day:
            idx = np.sort(rng.choice(idx, max_per_day, replace=False))
        perm = rng.permutation(idx)
        n_te = int(round(len(perm) * test_fraction))
        te, tr = perm[:n_te], perm[n_te:]
        clf = _logit(C=1.0).fit(X[tr], samples.labels[tr])
        out[d] = float((clf.predict(X[te]) == samples.labels[te]).mean())
    return out
