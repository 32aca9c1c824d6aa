"""Response records -> stacked 3-channel spectra.

Each record is cut into varying-length windows that all cover the strong
motion, every window is smoothed and Fourier transformed, and the floor,
ceiling and ground spectra are interpolated onto one frequency grid and
stacked.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.signal import resample_poly
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ArgumentError, ConfigurationError, DimensionError, PipelineError
from .quakesim import TASK_CLASSES, label_damage

CHANNEL_ORDER = ("floor", "ceiling", "ground")


@dataclass
class PrepConfig:
    l: int = 1000
    f_max: float = 26.0
    smooth_width: int = 5
    min_len_offset: float = 2.5
    length_step: float = 0.25
    placement_step: float = 0.25
    sample_rate: float = 100.0  # common rate every record is resampled to

    def to_dict(self):
        return asdict(self)


class Dataset:
    """Samples of one domain: ``X`` is ``n x 3 x l``.

    Labels live behind the ``y`` property, which counts its reads so tests
    and reports can prove that unsupervised training never touched them.
    """

    def __init__(self, X, y, domain_id, *, story=1, task="detection", record_ids=None,
                 windows=None, n_classes=None, header=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise DimensionError(f"samples must be n x channels x l, got {X.shape}")
        self.labeled = y is not None
        y = np.asarray(y if y is not None else np.full(X.shape[0], -1), dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise DimensionError(f"{X.shape[0]} samples but {y.shape} labels")
        self.X = X
        self._y = y
        self.domain_id = str(domain_id)
        self.story = int(story)
        self.task = task
        self.n_classes = int(n_classes or TASK_CLASSES.get(task, int(y.max(initial=0)) + 1))
        self.record_ids = list(record_ids) if record_ids is not None else [""] * len(y)
        self.windows = list(windows) if windows is not None else [(0.0, 0.0)] * len(y)
        self.header = dict(header or {})
        self.class_histogram = (np.bincount(y, minlength=self.n_classes) if self.labeled
                                else np.zeros(self.n_classes, dtype=np.int64))
        self.label_reads = 0
        self.parent = None

    @property
    def y(self) -> np.ndarray:
        if not self.labeled:
            raise ConfigurationError(f"domain {self.domain_id!r} carries no labels")
        node = self
        while node is not None:
            node.label_reads += 1
            node = node.parent
        return self._y

    def __len__(self):
        return self.X.shape[0]

    def __repr__(self):
        return f"Dataset(domain={self.domain_id!r}, n={len(self)}, shape={self.X.shape[1:]})"

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        sub = Dataset(self.X[idx], self._y[idx] if self.labeled else None, self.domain_id,
                      story=self.story, task=self.task,
                      record_ids=[self.record_ids[i] for i in idx],
                      windows=[self.windows[i] for i in idx], n_classes=self.n_classes,
                      header=self.header)
        sub.parent = self
        return sub

    def unlabeled(self) -> "Dataset":
        """Copy with the labels removed."""
        return Dataset(self.X, None, self.domain_id, story=self.story, task=self.task,
                       record_ids=self.record_ids, windows=self.windows,
                       n_classes=self.n_classes, header=self.header)

    def split(self, fraction=0.9, seed=0):
        """Random ``fraction`` / rest split."""
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.subset(np.sort(order[:cut])), self.subset(np.sort(order[cut:]))

    def kfold(self, n_folds, fold, seed=0):
        """Training part and validation fold ``fold`` of a seeded ``n_folds`` split."""
        if not 0 <= fold < n_folds:
            raise ArgumentError(f"fold {fold} outside [0, {n_folds})")
        chunks = np.array_split(np.random.default_rng(seed).permutation(len(self)), n_folds)
        val = np.sort(chunks[fold])
        rest = np.sort(np.concatenate([c for i, c in enumerate(chunks) if i != fold]))
        return self.subset(rest), self.subset(val)

    def save(self, path) -> None:
        header = {**self.header, "domain_id": self.domain_id, "story": self.story,
                  "task": self.task, "n_classes": self.n_classes,
                  "channel_order": list(CHANNEL_ORDER), "l": int(self.X.shape[2]),
                  "labeled": self.labeled}
        with open(path, "wb") as fh:
            np.savez(fh, X=self.X, y=self._y, record_ids=np.array(self.record_ids, dtype=str),
                     windows=np.array(self.windows, dtype=np.float64).reshape(-1, 2),
                     header=np.array(json.dumps(header, sort_keys=True)))

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            y = z["y"] if header.get("labeled", True) else None
            return cls(z["X"], y, header["domain_id"], story=header["story"],
                       task=header["task"], record_ids=z["record_ids"].tolist(),
                       windows=[tuple(w) for w in z["windows"]], n_classes=header["n_classes"],
                       header=header)


def pool(datasets, domain_id="pooled") -> Dataset:
    """Concatenate several domains into one."""
    first = datasets[0]
    return Dataset(np.concatenate([d.X for d in datasets]),
                   np.concatenate([d._y for d in datasets]), domain_id, story=first.story,
                   task=first.task, record_ids=sum((d.record_ids for d in datasets), []),
                   windows=sum((d.windows for d in datasets), []), n_classes=first.n_classes,
                   header=first.header)


def sliding_windows(signal_len_s, min_len_offset=2.5, step=0.25, placement_step=None,
                    strong_interval=None) -> list:
    """``(start, length)`` windows in seconds.

    Lengths run from ``t - min_len_offset`` up to ``t`` in ``step``
    increments; each length is placed at multiples of ``placement_step``
    (defaults to ``step``) while it fits.  With ``strong_interval`` given,
    windows that do not fully cover it are dropped.
    """
    t = float(signal_len_s)
    if min_len_offset <= 0 or step <= 0:
        raise ArgumentError("window offset and step must be positive")
    if t <= min_len_offset:
        raise ArgumentError(f"signal of {t} s is not longer than the {min_len_offset} s offset")
    placement_step = step if placement_step is None else placement_step
    if placement_step <= 0:
        raise ArgumentError("placement step must be positive")
    tol = 1e-9
    n_lengths = int(np.floor(min_len_offset / step + tol))
    lengths = [t - min_len_offset + i * step for i in range(n_lengths + 1)]
    if t - lengths[-1] > tol:
        lengths.append(t)
    out = []
    for length in lengths:
        j = 0
        while j * placement_step + length <= t + tol:
            start = j * placement_step
            j += 1
            if strong_interval is not None:
                s0, s1 = strong_interval
                if start > s0 + tol or start + length < s1 - tol:
                    continue
            out.append((round(start, 9), round(length, 9)))
    return out


def smooth(series, width=5) -> np.ndarray:
    """Centered moving average; windows are truncated at the edges."""
    x = np.asarray(series, dtype=np.float64)
    if width < 1 or width % 2 == 0:
        raise ArgumentError(f"smoothing width must be a positive odd integer, got {width}")
    if width > x.size:
        raise ArgumentError(f"smoothing width {width} exceeds series length {x.size}")
    if width == 1:
        return x.copy()
    half = width // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def spectrum(series, fs):
    """One-sided DFT magnitude spectrum."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < 2:
        raise ArgumentError("need at least two samples for a spectrum")
    return np.fft.rfftfreq(x.size, 1.0 / fs), np.abs(sfft.rfft(x))


def resample_spectrum(freqs, mags, l, f_max) -> np.ndarray:
    """Linear interpolation onto ``l`` points spanning ``[0, f_max]``."""
    freqs = np.asarray(freqs, dtype=np.float64)
    if f_max > freqs[-1] * (1 + 1e-12):
        raise ArgumentError(f"f_max {f_max} Hz exceeds the source Nyquist {freqs[-1]} Hz")
    return np.interp(frequency_grid(l, f_max), freqs, np.asarray(mags, dtype=np.float64))


def frequency_grid(l, f_max) -> np.ndarray:
    return np.linspace(0.0, f_max, int(l))


def stack_channels(ground, floor, ceiling) -> np.ndarray:
    """``3 x l`` array ordered (floor, ceiling, ground), each scaled to peak 1."""
    rows = [np.asarray(v, dtype=np.float64) for v in (floor, ceiling, ground)]
    if len({r.shape for r in rows}) != 1 or rows[0].ndim != 1:
        raise DimensionError("channels must be equal-length vectors")
    out = np.stack(rows)
    peak = out.max(axis=1, keepdims=True)
    np.divide(out, peak, out=out, where=peak > 0)
    return out


def resample_signal(x, fs_in, fs_out) -> np.ndarray:
    if fs_in == fs_out:
        return np.asarray(x, dtype=np.float64)
    ratio = Fraction(fs_out / fs_in).limit_denominator(1000)
    return resample_poly(x, ratio.numerator, ratio.denominator)


def story_channels(record, story):
    """Ground, floor and ceiling accelerations for a 1-based story index.

    The floor sensor sits on level ``story``; the ceiling is the level above,
    or the roof itself for the top story.
    """
    n = record.sdr.shape[1]
    if not 1 <= story <= n:
        raise ArgumentError(f"story {story} not in building {record.building_id!r} with {n} stories")
    fa = record.floor_accel
    return fa[:, 0], fa[:, story], fa[:, min(story + 1, n)]


def record_samples(record, story, config: PrepConfig):
    """Stacked spectra for every accepted window of one record."""
    fs = config.sample_rate
    if config.f_max > fs / 2:
        raise ArgumentError(f"f_max {config.f_max} Hz above Nyquist of {fs} Hz")
    chans = [resample_signal(c, record.sample_rate, fs) for c in story_channels(record, story)]
    duration = chans[0].size / fs
    wins = sliding_windows(duration, config.min_len_offset, config.length_step,
                           config.placement_step, record.strong_interval)
    samples = []
    for start, length in wins:
        i0 = int(round(start * fs))
        i1 = min(i0 + int(round(length * fs)), chans[0].size)
        specs = []
        for c in chans:
            freqs, mags = spectrum(smooth(c[i0:i1], config.smooth_width), fs)
            specs.append(resample_spectrum(freqs, mags, config.l, config.f_max))
        samples.append(stack_channels(*specs))
    return samples, wins


def assemble_dataset(records, story, task, config: PrepConfig | None = None,
                     domain_id=None) -> Dataset:
    config = config or PrepConfig()
    if task not in TASK_CLASSES:
        raise ArgumentError(f"unknown task {task!r}")
    X, y, rids, windows = [], [], [], []
    for rec in records:
        label = label_damage(float(rec.peak_sdr[story - 1]), task)
        samples, wins = record_samples(rec, story, config)
        X.extend(samples)
        y.extend([label] * len(samples))
        rids.extend([rec.record_id] * len(samples))
        windows.extend(wins)
    if not X:
        raise PipelineError("no windows survived the strong-motion coverage filter")
    dom = domain_id if domain_id is not None else records[0].building_id
    header = {"f_max": config.f_max, "prep": config.to_dict()}
    return Dataset(np.stack(X), y, dom, story=story, task=task, record_ids=rids,
                   windows=windows, header=header)


class SpectrumStacker(TransformerMixin, BaseEstimator):
    """Transformer turning response records into ``n x 3 x l`` spectra.

    ``fit`` is stateless; ``transform`` returns the stacked spectra for
    every accepted window of every record, in record order.
    """

    def __init__(self, story=2, config=None):
        self.story = story
        self.config = config

    def fit(self, records, y=None):
        self.config_ = self.config or PrepConfig()
        return self

    def transform(self, records):
        config = getattr(self, "config_", None) or self.config or PrepConfig()
        out = []
        for rec in records:
            out.extend(record_samples(rec, self.story, config)[0])
        if not out:
            raise PipelineError("no windows survived the strong-motion coverage filter")
        return np.stack(out)
