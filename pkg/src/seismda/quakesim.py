"""Synthetic multi-building seismic response generation.

Shear buildings with bilinear hysteretic stories are driven by filtered,
enveloped Gaussian noise and integrated with explicit central differences.
Repeating a simulation over a list of amplitude scale factors gives an
incremental dynamic analysis (IDA) sweep.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh

from .errors import ArgumentError, SimulationError

G = 9.81

DETECTION = "detection"
QUANTIFICATION = "quantification"
TASK_CLASSES = {DETECTION: 2, QUANTIFICATION: 5}
DAMAGE_BINS = (0.01, 0.02, 0.03, 0.06)


@dataclass
class BuildingSpec:
    """Lumped-mass shear building; per-story arrays are ordered bottom-up."""

    n_stories: int
    mass: list
    stiffness: list
    damping_ratio: float = 0.05
    yield_drift: float = 0.01
    hardening_ratio: float = 0.05
    first_story_height: float = 4.6
    story_height: float = 4.0
    name: str = ""

    def __post_init__(self):
        n = int(self.n_stories)
        if n < 1:
            raise ArgumentError("a building needs at least one story")
        self.n_stories = n
        self.mass = [float(v) for v in np.broadcast_to(np.asarray(self.mass, float), (n,))]
        self.stiffness = [float(v) for v in np.broadcast_to(np.asarray(self.stiffness, float), (n,))]
        if min(self.mass) <= 0 or min(self.stiffness) <= 0:
            raise ArgumentError("masses and stiffnesses must be positive")
        if self.first_story_height <= 0 or self.story_height <= 0:
            raise ArgumentError("story heights must be positive")
        if not 0 < self.damping_ratio < 1:
            raise ArgumentError(f"damping ratio {self.damping_ratio} outside (0, 1)")
        if not 0 < self.hardening_ratio <= 1:
            raise ArgumentError(f"post-yield stiffness ratio {self.hardening_ratio} outside (0, 1]")
        if self.yield_drift <= 0:
            raise ArgumentError("yield drift ratio must be positive")
        if not self.name:
            self.name = f"{n}-story"

    @property
    def heights(self) -> np.ndarray:
        h = np.full(self.n_stories, self.story_height)
        h[0] = self.first_story_height
        return h

    @property
    def total_height(self) -> float:
        return float(self.heights.sum())

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.mass)

    def stiffness_matrix(self) -> np.ndarray:
        k = np.asarray(self.stiffness)
        n = self.n_stories
        kk = np.zeros((n, n))
        for j in range(n):
            kk[j, j] += k[j]
            if j + 1 < n:
                kk[j, j] += k[j + 1]
                kk[j, j + 1] = kk[j + 1, j] = -k[j + 1]
        return kk

    def modal_periods(self) -> np.ndarray:
        """Elastic periods, longest first."""
        w2 = eigh(self.stiffness_matrix(), self.mass_matrix(), eigvals_only=True)
        return 2 * np.pi / np.sqrt(w2)

    def to_dict(self) -> dict:
        return asdict(self)


def shear_building(n_stories, first_period, *, story_mass=3.0e5, damping_ratio=0.05,
                   yield_drift=0.01, hardening_ratio=0.05, stiffness_taper=0.5,
                   first_story_height=4.6, story_height=4.0, name="") -> BuildingSpec:
    """Uniform-mass building whose stiffness is scaled to hit ``first_period``.

    Story stiffness tapers linearly from 1 at the base to ``stiffness_taper``
    at the roof before scaling.
    """
    n = int(n_stories)
    shape = np.linspace(1.0, stiffness_taper, n) if n > 1 else np.ones(1)
    trial = BuildingSpec(n, story_mass, shape, damping_ratio, yield_drift, hardening_ratio,
                         first_story_height, story_height, name)
    scale = (trial.modal_periods()[0] / first_period) ** 2
    return BuildingSpec(n, story_mass, shape * scale, damping_ratio, yield_drift,
                        hardening_ratio, first_story_height, story_height, name)


@dataclass
class GroundMotionSpec:
    dominant_freq: float = 2.0
    filter_damping: float = 0.4
    strong_duration: float = 20.0
    total_duration: float = 40.0
    rise_fraction: float = 0.15
    decay_fraction: float = 0.15
    pga: float = 1.0
    scale: float = 1.0
    sample_rate: float = 100.0
    seed: int = 0
    ambient_level: float = 0.01

    def __post_init__(self):
        if self.strong_duration <= 0 or self.total_duration <= 0:
            raise ArgumentError("durations must be positive")
        if self.sample_rate < 50:
            raise ArgumentError(f"sample rate {self.sample_rate} Hz below 50 Hz")
        if self.scale <= 0:
            raise ArgumentError("scale factor must be positive")
        if self.rise_fraction < 0 or self.decay_fraction < 0:
            raise ArgumentError("envelope fractions must be non-negative")
        if self.strong_interval[1] > self.total_duration:
            raise ArgumentError("strong-motion phase does not fit in the record")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def strong_interval(self) -> tuple:
        """Span of the envelope's flat top, in seconds."""
        start = self.rise_fraction * self.total_duration
        return start, start + self.strong_duration

    def to_dict(self) -> dict:
        return asdict(self)


def envelope(spec: GroundMotionSpec, t: np.ndarray) -> np.ndarray:
    t0, t1 = spec.strong_interval
    rise = max(t0, 1e-12)
    decay = max(spec.decay_fraction * spec.total_duration, 1e-12)
    env = np.ones_like(t)
    env = np.where(t < t0, t / rise, env)
    env = np.where(t > t1, np.clip(1.0 - (t - t1) / decay, 0.0, 1.0), env)
    return env


def generate_ground_motion(spec: GroundMotionSpec) -> np.ndarray:
    """Kanai-Tajimi filtered white noise times a trapezoidal envelope.

    The filter is applied in the frequency domain; the result is scaled so
    that its peak absolute value equals ``pga * scale``.  A small white
    ambient floor (relative to the peak) is added outside the scaling so
    pre- and post-event windows are not exactly silent.
    """
    n = int(round(spec.total_duration * spec.sample_rate))
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(n)
    ambient = rng.standard_normal(n)
    f = np.fft.rfftfreq(n, spec.dt)
    wg, zg = 2 * np.pi * spec.dominant_freq, spec.filter_damping
    w = 2 * np.pi * f
    h = (wg**2 + 2j * zg * wg * w) / (wg**2 - w**2 + 2j * zg * wg * w)
    shaped = np.fft.irfft(np.fft.rfft(noise) * h, n)
    t = np.arange(n) * spec.dt
    a = shaped * envelope(spec, t)
    a /= np.max(np.abs(a))
    a += spec.ambient_level * ambient / np.max(np.abs(ambient))
    a *= spec.pga * spec.scale / np.max(np.abs(a))
    return a


@dataclass
class ResponseRecord:
    dt: float
    floor_accel: np.ndarray          # (T, N+1), column 0 is the ground
    sdr: np.ndarray                  # (T, N)
    peak_sdr: np.ndarray             # (N,)
    building_id: str = ""
    motion_id: str = ""
    scale: float = 1.0
    strong_interval: tuple = (0.0, 0.0)
    displacement: np.ndarray | None = field(default=None, repr=False)
    velocity: np.ndarray | None = field(default=None, repr=False)
    story_shear: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return self.sdr.shape[0]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    @property
    def pfa(self) -> np.ndarray:
        return np.max(np.abs(self.floor_accel), axis=0)

    @property
    def record_id(self) -> str:
        return f"{self.building_id}/{self.motion_id}/x{self.scale:g}"


def rayleigh_coefficients(building: BuildingSpec) -> tuple:
    periods = building.modal_periods()
    z = building.damping_ratio
    w1 = 2 * np.pi / periods[0]
    if building.n_stories == 1:
        return 2 * z * w1, 0.0
    w2 = 2 * np.pi / periods[1]
    a0 = 2 * z * w1 * w2 / (w1 + w2)
    a1 = 2 * z / (w1 + w2)
    return a0, a1


def stable_substeps(building: BuildingSpec, dt: float, safety: float = 0.8) -> int:
    limit = safety * building.modal_periods()[-1] / np.pi
    return max(1, int(np.ceil(dt / limit)))


def _integrate(building: BuildingSpec, a_g: np.ndarray, h: float, substeps: int, u0=None):
    """Integrate a batch of ground records ``a_g`` (R x T) at step ``h``.

    Returns displacement, velocity, relative acceleration and story shear,
    each R x T x N, sampled at every ``substeps``-th internal step.
    """
    n = building.n_stories
    r, n_out = a_g.shape
    m = np.asarray(building.mass)
    k = np.asarray(building.stiffness)
    d_yield = building.yield_drift * building.heights
    alpha = building.hardening_ratio
    a0, a1 = rayleigh_coefficients(building)
    c_mat = a0 * np.diag(m) + a1 * building.stiffness_matrix()
    lhs_inv_t = np.linalg.inv(np.diag(m) / h**2 + c_mat / (2 * h)).T
    back_t = (np.diag(m) / h**2 - c_mat / (2 * h)).T
    two_m = 2 * m / h**2

    if substeps > 1:
        fine_t = np.arange((n_out - 1) * substeps + 1) / substeps
        base = np.arange(n_out)
        ag_fine = np.stack([np.interp(fine_t, base, row) for row in a_g])
    else:
        ag_fine = a_g
    load = -ag_fine.T[:, :, None] * m  # (steps, R, N)

    u = np.zeros((r, n)) if u0 is None else np.broadcast_to(np.asarray(u0, float), (r, n)).copy()
    drift = np.diff(u, axis=1, prepend=0.0)
    z = np.clip(drift, -d_yield, d_yield)  # hysteretic part of the story deformation
    shear = alpha * k * drift + (1 - alpha) * k * z
    restoring = shear.copy()
    restoring[:, :-1] -= shear[:, 1:]
    u_prev = u + 0.5 * h**2 * (load[0] - restoring) / m

    disp = np.empty((n_out, r, n))
    vel = np.empty((n_out, r, n))
    acc = np.empty((n_out, r, n))
    shears = np.empty((n_out, r, n))
    last = ag_fine.shape[1] - 1
    for i in range(last + 1):
        u_next = (load[i] - restoring + two_m * u - u_prev @ back_t) @ lhs_inv_t
        if i % substeps == 0:
            j = i // substeps
            disp[j] = u
            vel[j] = (u_next - u_prev) / (2 * h)
            acc[j] = (u_next - 2 * u + u_prev) / h**2
            shears[j] = shear
        if i == last:
            break
        new_drift = np.diff(u_next, axis=1, prepend=0.0)
        z = np.clip(z + (new_drift - drift), -d_yield, d_yield)
        drift = new_drift
        shear = alpha * k * drift + (1 - alpha) * k * z
        restoring = shear.copy()
        restoring[:, :-1] -= shear[:, 1:]
        u_prev, u = u, u_next
        if not np.isfinite(u).all():
            raise SimulationError(f"non-finite state at integration step {i + 1}")
    return tuple(np.ascontiguousarray(a.transpose(1, 0, 2)) for a in (disp, vel, acc, shears))


def _check_step(building, dt, substeps):
    h = dt / substeps
    t_min = building.modal_periods()[-1]
    if h >= t_min / np.pi:
        raise ArgumentError(f"step {h:.4g} s unstable; needs < {t_min / np.pi:.4g} s "
                            f"(shortest period {t_min:.4g} s)")
    return h


def _make_record(building, a_g, dt, disp, vel, acc, shears, **meta):
    sdr = np.diff(disp, axis=1, prepend=0.0) / building.heights
    floor = np.concatenate((a_g[:, None], acc + a_g[:, None]), axis=1)
    return ResponseRecord(dt=dt, floor_accel=floor, sdr=sdr, peak_sdr=np.max(np.abs(sdr), axis=0),
                          displacement=disp, velocity=vel, story_shear=shears, **meta)


def simulate_response(building: BuildingSpec, motion, dt: float, *, substeps: int = 1,
                      initial_displacement=None, building_id=None, motion_id="",
                      scale=1.0, strong_interval=(0.0, 0.0)) -> ResponseRecord:
    """Central-difference time history under ground acceleration ``motion``.

    The ground record is linearly interpolated onto ``substeps`` internal
    steps per output sample; the integration step ``dt / substeps`` must be
    below ``T_min / pi``.
    """
    a_g = np.asarray(motion, dtype=np.float64)
    h = _check_step(building, dt, substeps)
    disp, vel, acc, shears = (x[0] for x in _integrate(building, a_g[None], h, substeps,
                                                       initial_displacement))
    return _make_record(building, a_g, dt, disp, vel, acc, shears,
                        building_id=building.name if building_id is None else building_id,
                        motion_id=motion_id, scale=float(scale),
                        strong_interval=tuple(strong_interval))


def label_damage(peak_sdr: float, task: str = QUANTIFICATION) -> int:
    """Damage class from a peak story drift ratio (left-closed bins)."""
    if peak_sdr < 0 or not np.isfinite(peak_sdr):
        raise ArgumentError(f"peak SDR must be finite and non-negative, got {peak_sdr}")
    if task == DETECTION:
        return int(peak_sdr >= DAMAGE_BINS[0])
    if task == QUANTIFICATION:
        return int(np.searchsorted(DAMAGE_BINS, peak_sdr, side="right"))
    raise ArgumentError(f"unknown task {task!r}")


def generate_domain_dataset(building: BuildingSpec, motions, scales) -> list:
    """Simulate every (motion, scale) pair; motions vary slowest."""
    if not motions or not scales:
        raise ArgumentError("need at least one motion and one scale factor")
    records = []
    for mi, spec in enumerate(motions):
        substeps = stable_substeps(building, spec.dt)
        h = _check_step(building, spec.dt, substeps)
        unit = GroundMotionSpec(**{**asdict(spec), "scale": 1.0})
        base = generate_ground_motion(unit)
        batch = np.stack([base * float(s) for s in scales])
        out = _integrate(building, batch, h, substeps)
        for si, s in enumerate(scales):
            records.append(_make_record(
                building, batch[si], spec.dt, *(x[si] for x in out), building_id=building.name,
                motion_id=f"gm{mi:03d}", scale=float(s), strong_interval=unit.strong_interval))
    return records


def motion_suite(n_motions, seed=0, *, freq_range=(0.8, 4.0), sample_rates=(50, 100, 200),
                 **overrides) -> list:
    """Random ground-motion specs with log-uniform dominant frequencies."""
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n_motions):
        f = float(np.exp(rng.uniform(*np.log(freq_range))))
        specs.append(GroundMotionSpec(dominant_freq=f, sample_rate=float(rng.choice(sample_rates)),
                                      seed=int(rng.integers(2**31)), **overrides))
    return specs


def labels_for(record: ResponseRecord, task: str) -> list:
    return [label_damage(float(v), task) for v in record.peak_sdr]


def export_records(records, out_dir, building: BuildingSpec | None = None, motions=None) -> Path:
    """One CSV per record plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, rec in enumerate(records):
        fname = f"record_{idx:05d}.csv"
        n = rec.sdr.shape[1]
        header = ["time", "ground_accel"] + [f"floor{j}_accel" for j in range(1, n + 1)] \
            + [f"story{j}_sdr" for j in range(1, n + 1)]
        t = np.arange(rec.n_steps) * rec.dt
        table = np.column_stack([t, rec.floor_accel, rec.sdr])
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(table.tolist())
        entry = {
            "file": fname, "building_id": rec.building_id, "motion_id": rec.motion_id,
            "scale": rec.scale, "dt": rec.dt, "strong_interval": list(rec.strong_interval),
            "peak_sdr": rec.peak_sdr.tolist(),
            "labels": {task: labels_for(rec, task) for task in TASK_CLASSES},
        }
        if motions is not None:
            entry["motion"] = motions[idx]
        entries.append(entry)
    manifest = {"building": building.to_dict() if building else None, "records": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out


def load_records(in_dir) -> list:
    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    records = []
    for e in manifest["records"]:
        data = np.loadtxt(src / e["file"], delimiter=",", skiprows=1, ndmin=2)
        n = len(e["peak_sdr"])
        records.append(ResponseRecord(
            dt=e["dt"], floor_accel=data[:, 1 : n + 2], sdr=data[:, n + 2 :],
            peak_sdr=np.asarray(e["peak_sdr"]), building_id=e["building_id"],
            motion_id=e["motion_id"], scale=e["scale"], strong_interval=tuple(e["strong_interval"])))
    return records
