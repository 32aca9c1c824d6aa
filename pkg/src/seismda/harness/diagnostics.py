"""Domain-shift diagnostics: proxy A-distance and response statistics."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..errors import ArgumentError


def proxy_a_distance(features_s, features_t, *, seed=0, epochs=30, lr=1e-3, batch_size=64,
                     train_fraction=0.8, return_error=False):
    """``2 (1 - 2 err)`` of a linear domain probe, clipped to ``[0, 2]``.

    A fresh flatten + dense(2) probe is trained to tell the two sets apart
    on a random ``train_fraction`` split and scored on the rest.  Inputs are
    standardised with training-split statistics first.
    """
    fs = np.asarray(features_s, dtype=np.float64)
    ft = np.asarray(features_t, dtype=np.float64)
    fs = fs.reshape(len(fs), -1)
    ft = ft.reshape(len(ft), -1)
    if fs.shape[1] != ft.shape[1]:
        raise ArgumentError(f"feature widths differ: {fs.shape[1]} vs {ft.shape[1]}")
    X = np.concatenate([fs, ft])
    y = np.concatenate([np.ones(len(fs), np.int64), np.zeros(len(ft), np.int64)])
    n_train = int(round(train_fraction * len(X)))
    if min(len(fs), len(ft)) < 2 or n_train < 2 or len(X) - n_train < 1:
        raise ArgumentError(f"too few samples for a probe split ({len(fs)} vs {len(ft)})")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(X))
    tr, te = order[:n_train], order[n_train:]
    mu = X[tr].mean(axis=0)
    sd = X[tr].std(axis=0)
    sd[sd < 1e-12] = 1.0
    Z = (X - mu) / sd

    d = Z.shape[1]
    W = ad.Tensor(ad.init_uniform((2, d), d, rng) * 0.1, requires_grad=True, name="w")
    b = ad.Tensor(np.zeros(2), requires_grad=True, name="b")
    opt = ad.Adam({"w": W, "b": b}, lr=lr)
    for _ in range(epochs):
        perm = rng.permutation(tr)
        for i in range(0, len(perm), batch_size):
            idx = perm[i:i + batch_size]
            loss = ad.softmax_cross_entropy(ad.dense(ad.Tensor(Z[idx]), W, b), y[idx])
            opt.step(ad.backward(loss, {"w": W, "b": b}))
    pred = (Z[te] @ W.data.T + b.data).argmax(axis=1)
    err = float(np.mean(pred != y[te]))
    dist = float(np.clip(2.0 * (1.0 - 2.0 * err), 0.0, 2.0))
    return (dist, err) if return_error else dist


def response_stats(records, story) -> list:
    """Per scale factor: PFA mean/variance, log-PFA mean/variance, mean peak SDR.

    PFA is read at floor level ``story``; variances are population
    variances.
    """
    records = list(records)
    if not records:
        raise ArgumentError("no records to summarise")
    groups = defaultdict(list)
    for rec in records:
        n = rec.sdr.shape[1]
        if not 1 <= story <= n:
            raise ArgumentError(f"story {story} not in a {n}-story record")
        groups[float(rec.scale)].append(rec)
    rows = []
    for scale in sorted(groups):
        recs = groups[scale]
        pfa = np.array([r.pfa[story] for r in recs])
        log_pfa = np.log(np.maximum(pfa, np.finfo(float).tiny))
        rows.append({"scale": scale, "n_records": len(recs),
                     "pfa_mean": float(pfa.mean()), "pfa_var": float(pfa.var()),
                     "log_pfa_mean": float(log_pfa.mean()), "log_pfa_var": float(log_pfa.var()),
                     "mean_peak_sdr": float(np.mean([r.peak_sdr[story - 1] for r in recs]))})
    return rows


def write_csv(rows, path, fields=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in fields})
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(_fmt(x)) for x in v)
    return v
