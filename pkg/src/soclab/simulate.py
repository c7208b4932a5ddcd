"""Stochastic integrators for every process in the model family.

Euler-Maruyama drives the nonlinear diffusions (the n-spin system, the
reduced pair, the rescaled fluctuation pair, the critical equation); the
linear relaxation process is sampled from its exact Gaussian transition.
A Metropolis sampler targets the static self-organizing measure.  All
ensembles are replica-deterministic: replica i depends only on
(master_seed, i), so thread count never changes any output byte.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import njit, prange

from .model import ModelParams, ScalingSchedule, StateSpaceError
from .rng import next_normal_pair, next_uniform, replica_seeds, state_from_seed

INIT_CODES = {"iid-gaussian": 0, "zero": 1, "centered-gaussian": 2}


def set_threads(k):
    """Cap the compiled-kernel worker count (never above the startup max)."""
    numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))


@dataclass
class SimSpec:
    """One reproducible simulation request."""

    params: ModelParams
    horizon: float
    dt: float
    schedule: ScalingSchedule | None = None
    initial: object = "iid-gaussian"
    master_seed: int = 0
    replicas: int = 1
    record_every: int = 1
    noise: bool = True
    process: str = "full"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def steps(self):
        return max(1, int(round(self.horizon / self.dt))) if self.horizon > 0 else 0

    def echo(self):
        d = {
            "process": self.process,
            "sigma": self.params.sigma,
            "n": self.params.n,
            "horizon": self.horizon,
            "dt": self.dt,
            "initial": str(self.initial),
            "master_seed": int(self.master_seed),
            "replicas": int(self.replicas),
            "record_every": int(self.record_every),
            "noise": bool(self.noise),
        }
        if self.schedule is not None:
            d["schedule"] = repr(self.schedule)
        return d


@dataclass
class EnsembleResult:
    """Seeded replica outcomes with reproducible provenance.

    wall_time is measurement metadata and is excluded from to_dict()
    so that serialized results are byte-stable across reruns.
    """

    times: np.ndarray
    values: np.ndarray
    seeds: np.ndarray
    spec_echo: dict
    extras: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def replicas(self):
        return self.values.shape[0]

    def terminal(self):
        return self.values[:, -1, ...]

    def spec_hash(self):
        blob = json.dumps(self.spec_echo, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self):
        return {
            "spec": self.spec_echo,
            "spec_hash": self.spec_hash(),
            "seeds": [int(s) for s in self.seeds],
            "times": [float(t) for t in self.times],
            "values": self.values.tolist(),
            "extras": self.extras,
        }


def _record_plan(steps, record_every):
    idx = list(range(0, steps + 1, record_every))
    if idx[-1] != steps:
        idx.append(steps)
    return np.array(idx, dtype=np.int64)


@njit(cache=True, parallel=True)
def _full_kernel(seeds, n, steps, dt, sigma, noise, init_code, rec_idx, out):
    sdt = np.sqrt(dt) * noise
    inv_s2 = 1.0 / (sigma * sigma)
    nrec = rec_idx.shape[0]
    for r in prange(seeds.shape[0]):
        s = state_from_seed(seeds[r])
        z = np.empty(n)
        if init_code == 1:
            for j in range(n):
                z[j] = 0.0
        else:
            j = 0
            while j + 1 < n:
                g1, g2 = next_normal_pair(s)
                z[j] = sigma * g1
                z[j + 1] = sigma * g2
                j += 2
            if j < n:
                g1, g2 = next_normal_pair(s)
                z[j] = sigma * g1
            if init_code == 2:
                m = 0.0
                for j in range(n):
                    m += z[j]
                m /= n
                for j in range(n):
                    z[j] -= m
        S = 0.0
        T = 0.0
        for j in range(n):
            S += z[j]
            T += z[j] * z[j]
        rec = 0
        if rec_idx[0] == 0:
            out[r, 0, 0] = S / n
            out[r, 0, 1] = T / n - sigma * sigma
            rec = 1
        for k in range(1, steps + 1):
            ratio = S / (T + 1.0)
            decay = 1.0 - 0.5 * dt * (inv_s2 + ratio * ratio)
            push = 0.5 * dt * ratio
            Sn = 0.0
            Tn = 0.0
            j = 0
            while j + 1 < n:
                g1, g2 = next_normal_pair(s)
                zj = z[j] * decay + push + sdt * g1
                z[j] = zj
                Sn += zj
                Tn += zj * zj
                zj = z[j + 1] * decay + push + sdt * g2
                z[j + 1] = zj
                Sn += zj
                Tn += zj * zj
                j += 2
            if j < n:
                g1, g2 = next_normal_pair(s)
                zj = z[j] * decay + push + sdt * g1
                z[j] = zj
                Sn += zj
                Tn += zj * zj
            S = Sn
            T = Tn
            if rec < nrec and rec_idx[rec] == k:
                out[r, rec, 0] = S / n
                out[r, rec, 1] = T / n - sigma * sigma
                rec += 1


@njit(cache=True, inline="always")
def _pair_step(x, y, n, s2, bn, dt, sdt, s, clamp):
    h = 1.0 / (1.0 + y / (bn * s2) + 1.0 / (n * s2))
    h2 = h * h
    dx = 0.5 * (x * bn * bn / s2 * (h - 1.0) - x**3 / (s2 * s2) * h2)
    dy = bn * x * x / (n * s2 * s2) * h2 - bn * bn * y / s2
    axx = bn**4 / n
    axy = 2.0 * bn**3 * x / n
    ayy = 4.0 * bn**4 / n * (y / bn + s2)
    m11 = np.sqrt(axx)
    m21 = axy / m11
    rest = ayy - m21 * m21
    if rest < 0.0:
        rest = 0.0
        clamp += 1
    m22 = np.sqrt(rest)
    g1, g2 = next_normal_pair(s)
    xn = x + dx * dt + sdt * m11 * g1
    yn = y + dy * dt + sdt * (m21 * g1 + m22 * g2)
    floor = -s2 * bn * (1.0 - 1e-12)
    if yn <= floor:
        yn = floor
        clamp += 1
    return xn, yn, clamp


@njit(cache=True, parallel=True)
def _pair_kernel(seeds, n, sigma, bn, steps, dt, noise, x0, y0, rec_idx, out, clamps):
    sdt = np.sqrt(dt) * noise
    s2 = sigma * sigma
    nrec = rec_idx.shape[0]
    for r in prange(seeds.shape[0]):
        s = state_from_seed(seeds[r])
        x = x0
        y = y0
        clamp = 0
        rec = 0
        if rec_idx[0] == 0:
            out[r, 0, 0] = x
            out[r, 0, 1] = y
            rec = 1
        for k in range(1, steps + 1):
            x, y, clamp = _pair_step(x, y, n, s2, bn, dt, sdt, s, clamp)
            if rec < nrec and rec_idx[rec] == k:
                out[r, rec, 0] = x
                out[r, rec, 1] = y
                rec += 1
        clamps[r] = clamp


@njit(cache=True, parallel=True)
def _tube_kernel(seeds, n, sigma, bn, steps, dt, x0, y0, gamma, out_dev):
    sdt = np.sqrt(dt)
    s2 = sigma * sigma
    for r in prange(seeds.shape[0]):
        s = state_from_seed(seeds[r])
        x = x0
        y = y0
        clamp = 0
        dev = abs(x - gamma[0])
        for k in range(1, steps + 1):
            x, y, clamp = _pair_step(x, y, n, s2, bn, dt, sdt, s, clamp)
            d = abs(x - gamma[k])
            if d > dev:
                dev = d
        out_dev[r] = dev


@njit(cache=True, parallel=True)
def _critical_kernel(seeds, sigma, steps, dt, noise, x0, rec_idx, out):
    sdt = np.sqrt(dt) * noise
    s4 = (sigma * sigma) ** 2
    nrec = rec_idx.shape[0]
    for r in prange(seeds.shape[0]):
        s = state_from_seed(seeds[r])
        x = x0
        spare = 0.0
        have = False
        rec = 0
        if rec_idx[0] == 0:
            out[r, 0] = x
            rec = 1
        for k in range(1, steps + 1):
            if have:
                g = spare
                have = False
            else:
                g, spare = next_normal_pair(s)
                have = True
            x = x - x**3 / (2.0 * s4) * dt + sdt * g
            if rec < nrec and rec_idx[rec] == k:
                out[r, rec] = x
                rec += 1


@njit(cache=True, parallel=True)
def _gibbs_kernel(seeds, n, sigma, sweeps, burn, thin, step0, target, adapt_rate,
                  out_stats, out_acc, out_step, out_z):
    s2 = sigma * sigma
    for r in prange(seeds.shape[0]):
        s = state_from_seed(seeds[r])
        z = np.empty(n)
        j = 0
        while j + 1 < n:
            g1, g2 = next_normal_pair(s)
            z[j] = sigma * g1
            z[j + 1] = sigma * g2
            j += 2
        if j < n:
            g1, _ = next_normal_pair(s)
            z[j] = sigma * g1
        S = 0.0
        T = 0.0
        for j in range(n):
            S += z[j]
            T += z[j] * z[j]
        step = step0
        kept = 0
        accepted = 0
        proposed = 0
        spare = 0.0
        have = False
        for sweep in range(sweeps):
            acc_sweep = 0
            for j in range(n):
                if have:
                    g = spare
                    have = False
                else:
                    g, spare = next_normal_pair(s)
                    have = True
                znew = z[j] + step * g
                Sn = S + znew - z[j]
                Tn = T + znew * znew - z[j] * z[j]
                dlog = (0.5 * Sn * Sn / (Tn + 1.0) - 0.5 * S * S / (T + 1.0)
                        - (znew * znew - z[j] * z[j]) / (2.0 * s2))
                if dlog >= 0.0 or np.log(next_uniform(s) + 1e-320) < dlog:
                    z[j] = znew
                    S = Sn
                    T = Tn
                    acc_sweep += 1
            if sweep < burn:
                step = step * np.exp(adapt_rate * (acc_sweep / n - target))
                if step < 1e-3 * sigma:
                    step = 1e-3 * sigma
                if step > 10.0 * sigma:
                    step = 10.0 * sigma
            else:
                accepted += acc_sweep
                proposed += n
                if (sweep - burn) % thin == 0 and kept < out_stats.shape[1]:
                    out_stats[r, kept, 0] = S
                    out_stats[r, kept, 1] = T
                    kept += 1
        out_acc[r] = accepted / max(1, proposed)
        out_step[r] = step
        for j in range(n):
            out_z[r, j] = z[j]


def _finish(times, values, seeds, spec_echo, extras, t0):
    return EnsembleResult(times=times, values=values, seeds=seeds,
                          spec_echo=spec_echo, extras=extras,
                          wall_time=time.monotonic() - t0)


def simulate_full(spec: SimSpec) -> EnsembleResult:
    """Euler ensemble of the n-spin system, recording (S/n, T/n - sigma^2).

    Each of the n coordinates gets an independent Gaussian increment per
    step; the recorded pair is the exact sufficient statistic.  Rejects
    dt above sigma^2/10 (stiffness guard for the spin relaxation).
    """
    params = spec.params
    if spec.dt > params.sigma2 / 10:
        raise ValueError(f"dt={spec.dt} too large for sigma^2={params.sigma2} "
                         "(guard: dt <= sigma^2/10)")
    if isinstance(spec.initial, str):
        init_code = INIT_CODES[spec.initial]
    else:
        raise ValueError("full simulation takes a named initial policy")
    t0 = time.monotonic()
    steps = spec.steps
    rec_idx = _record_plan(steps, spec.record_every)
    seeds = replica_seeds(spec.master_seed, spec.replicas)
    out = np.empty((spec.replicas, rec_idx.size, 2))
    _full_kernel(seeds, params.n, steps, spec.dt, params.sigma,
                 1.0 if spec.noise else 0.0, init_code, rec_idx, out)
    echo = spec.echo() | {"process": "full"}
    return _finish(rec_idx * spec.dt, out, seeds, echo, {}, t0)


def _pair_initial(spec, frame):
    if isinstance(spec.initial, (tuple, list)) and len(spec.initial) == 2:
        return float(spec.initial[0]), float(spec.initial[1])
    if spec.initial in ("zero", "fixed-reduced", "iid-gaussian"):
        return 0.0, 0.0
    raise ValueError(f"unsupported initial condition {spec.initial!r} for {frame}")


def simulate_reduced(spec: SimSpec) -> EnsembleResult:
    """Euler ensemble of the reduced raw-frame pair (x, y).

    The two-by-two diffusion square root is the closed-form Cholesky
    factor with the determinant clamped at zero; a clamp rate above 1%
    of steps signals a corrupted state and raises.
    """
    params = spec.params
    x0, y0 = _pair_initial(spec, "reduced")
    if y0 + params.sigma2 < x0 * x0:
        raise StateSpaceError("initial reduced state violates y + sigma^2 >= x^2")
    t0 = time.monotonic()
    steps = spec.steps
    rec_idx = _record_plan(steps, spec.record_every)
    seeds = replica_seeds(spec.master_seed, spec.replicas)
    out = np.empty((spec.replicas, rec_idx.size, 2))
    clamps = np.zeros(spec.replicas, dtype=np.int64)
    _pair_kernel(seeds, params.n, params.sigma, 1.0, steps, spec.dt,
                 1.0 if spec.noise else 0.0, x0, y0, rec_idx, out, clamps)
    frac = float(clamps.sum()) / max(1, steps * spec.replicas)
    if frac > 0.01:
        warnings.warn(f"diffusion clamp active on {frac:.1%} of steps; "
                      "state drifted outside the physical region")
    echo = spec.echo() | {"process": "reduced"}
    return _finish(rec_idx * spec.dt, out, seeds, echo, {"clamp_fraction": frac}, t0)


def simulate_fluctuation(spec: SimSpec, mode="direct") -> EnsembleResult:
    """Ensemble of the moderate-frame pair (b_n x(b_n^2 t), b_n y(b_n^2 t)).

    mode 'direct' integrates the rescaled generator; mode 'from-full'
    runs the n-spin system on the slow clock and transforms the records,
    which is the cross-validation path.
    """
    params = spec.params
    if spec.schedule is None:
        raise ValueError("fluctuation simulation needs a scaling schedule")
    bn = spec.schedule.bn(params.n)
    t0 = time.monotonic()
    if mode == "from-full":
        sub = SimSpec(params=params, horizon=spec.horizon * bn * bn, dt=spec.dt,
                      initial=spec.initial if isinstance(spec.initial, str)
                      else "centered-gaussian",
                      master_seed=spec.master_seed, replicas=spec.replicas,
                      record_every=spec.record_every, noise=spec.noise)
        base = simulate_full(sub)
        times = base.times / (bn * bn)
        values = base.values * bn
        echo = spec.echo() | {"process": "fluctuation", "mode": mode, "bn": bn}
        return _finish(times, values, base.seeds, echo, {}, t0)
    if mode != "direct":
        raise ValueError(f"unknown fluctuation mode {mode!r}")
    x0, y0 = _pair_initial(spec, "fluctuation")
    if not y0 > -params.sigma2 * bn:
        raise StateSpaceError("initial state outside the fluctuation domain")
    steps = spec.steps
    rec_idx = _record_plan(steps, spec.record_every)
    seeds = replica_seeds(spec.master_seed, spec.replicas)
    out = np.empty((spec.replicas, rec_idx.size, 2))
    clamps = np.zeros(spec.replicas, dtype=np.int64)
    _pair_kernel(seeds, params.n, params.sigma, bn, steps, spec.dt,
                 1.0 if spec.noise else 0.0, x0, y0, rec_idx, out, clamps)
    frac = float(clamps.sum()) / max(1, steps * spec.replicas)
    echo = spec.echo() | {"process": "fluctuation", "mode": mode, "bn": bn}
    return _finish(rec_idx * spec.dt, out, seeds, echo, {"clamp_fraction": frac}, t0)


def tube_deviations(spec: SimSpec, gamma_values) -> EnsembleResult:
    """Per-replica sup_t |X_n(t) - gamma(t)| for the fluctuation process."""
    params = spec.params
    bn = spec.schedule.bn(params.n)
    x0, y0 = _pair_initial(spec, "fluctuation")
    gamma = np.asarray(gamma_values, dtype=float)
    steps = spec.steps
    if gamma.size != steps + 1:
        raise ValueError("gamma must be sampled on the step grid (steps + 1 points)")
    t0 = time.monotonic()
    seeds = replica_seeds(spec.master_seed, spec.replicas)
    dev = np.empty(spec.replicas)
    _tube_kernel(seeds, params.n, params.sigma, bn, steps, spec.dt, x0, y0, gamma, dev)
    echo = spec.echo() | {"process": "fluctuation-tube", "bn": bn}
    return _finish(np.array([spec.horizon]), dev[:, None], seeds, echo, {}, t0)


def simulate_critical(sigma, horizon, dt, seed=0, x0=0.0, replicas=1, noise=True,
                      record_every=1) -> EnsembleResult:
    """Euler ensemble of dX = -X^3/(2 sigma^4) dt + dB."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0 = time.monotonic()
    steps = max(1, int(round(horizon / dt))) if horizon > 0 else 0
    rec_idx = _record_plan(steps, record_every)
    seeds = replica_seeds(seed, replicas)
    out = np.empty((replicas, rec_idx.size))
    _critical_kernel(seeds, float(sigma), steps, float(dt),
                     1.0 if noise else 0.0, float(x0), rec_idx, out)
    echo = {"process": "critical", "sigma": float(sigma), "horizon": float(horizon),
            "dt": float(dt), "x0": float(x0), "master_seed": int(seed),
            "replicas": int(replicas), "noise": bool(noise),
            "record_every": int(record_every)}
    return _finish(rec_idx * dt, out, seeds, echo, {}, t0)


def simulate_ou(sigma, horizon, dt, seed=0, y0=0.0, replicas=1,
                record_every=1) -> EnsembleResult:
    """Relaxation process dY = -Y/sigma^2 dt + 2 sigma dB, sampled exactly.

    Uses the Gaussian transition (mean decay exp(-t/sigma^2), stationary
    variance 2 sigma^4), so there is no discretization error at any dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0 = time.monotonic()
    steps = max(1, int(round(horizon / dt))) if horizon > 0 else 0
    rec_idx = _record_plan(steps, record_every)
    s2 = float(sigma) ** 2
    a = np.exp(-dt / s2)
    sd = np.sqrt(2.0 * s2 * s2 * (1.0 - a * a))
    seeds = replica_seeds(seed, replicas)
    out = np.empty((replicas, rec_idx.size))
    for r in range(replicas):
        g = np.random.Generator(np.random.Philox(key=seeds[r]))
        draws = g.standard_normal(steps)
        y = float(y0)
        rec = 0
        if rec_idx[0] == 0:
            out[r, 0] = y
            rec = 1
        for k in range(1, steps + 1):
            y = y * a + sd * draws[k - 1]
            if rec < rec_idx.size and rec_idx[rec] == k:
                out[r, rec] = y
                rec += 1
    echo = {"process": "ou", "sigma": float(sigma), "horizon": float(horizon),
            "dt": float(dt), "y0": float(y0), "master_seed": int(seed),
            "replicas": int(replicas), "record_every": int(record_every)}
    return _finish(rec_idx * dt, out, seeds, echo, {}, t0)


@dataclass
class GibbsResult:
    stats: np.ndarray        # (replicas, kept, 2) recorded (S, T)
    final_z: np.ndarray      # (replicas, n)
    acceptance: np.ndarray   # post-burn-in acceptance rate per replica
    step: np.ndarray         # frozen proposal scale per replica
    seeds: np.ndarray
    spec_echo: dict
    wall_time: float = 0.0

    def magnetization(self):
        return self.stats[..., 0]


def sample_gibbs(params: ModelParams, sweeps, burn=None, thin=1, seed=0,
                 replicas=1, init_step=None, target_acceptance=0.3) -> GibbsResult:
    """Single-site Metropolis sampler for the static self-organizing law.

    Gaussian random-walk proposals; the step is tuned toward the target
    acceptance during burn-in only, then frozen, so detailed balance
    holds over the recorded stretch.  Warns when the frozen acceptance
    rate leaves [0.1, 0.6].
    """
    if burn is None:
        burn = max(1, sweeps // 5)
    if burn >= sweeps:
        raise ValueError("burn-in must be shorter than the sweep budget")
    t0 = time.monotonic()
    kept = (sweeps - burn + thin - 1) // thin
    seeds = replica_seeds(seed, replicas)
    stats = np.empty((replicas, kept, 2))
    acc = np.empty(replicas)
    step = np.empty(replicas)
    zs = np.empty((replicas, params.n))
    step0 = float(init_step) if init_step is not None else 2.4 * params.sigma
    _gibbs_kernel(seeds, params.n, params.sigma, int(sweeps), int(burn), int(thin),
                  step0, float(target_acceptance), 0.05, stats, acc, step, zs)
    mean_acc = float(acc.mean())
    if not 0.1 <= mean_acc <= 0.6:
        warnings.warn(f"Metropolis acceptance rate {mean_acc:.2f} outside [0.1, 0.6]")
    echo = {"process": "gibbs", "sigma": params.sigma, "n": params.n,
            "sweeps": int(sweeps), "burn": int(burn), "thin": int(thin),
            "master_seed": int(seed), "replicas": int(replicas),
            "target_acceptance": target_acceptance}
    return GibbsResult(stats=stats, final_z=zs, acceptance=acc, step=step,
                       seeds=seeds, spec_echo=echo,
                       wall_time=time.monotonic() - t0)


_PROCESS_DISPATCH = {
    "full": simulate_full,
    "reduced": simulate_reduced,
    "fluctuation": simulate_fluctuation,
}


def run_ensemble(spec: SimSpec, extractor=None) -> EnsembleResult:
    """Run the ensemble named by spec.process and optionally extract.

    The extractor maps (times, one replica's path) to a scalar or
    vector; extraction happens in replica order so reductions are
    order-stable and independent of worker count.
    """
    if spec.process in _PROCESS_DISPATCH:
        res = _PROCESS_DISPATCH[spec.process](spec)
    elif spec.process == "critical":
        x0 = spec.initial if isinstance(spec.initial, (int, float)) else 0.0
        res = simulate_critical(spec.params.sigma, spec.horizon, spec.dt,
                                seed=spec.master_seed, x0=float(x0),
                                replicas=spec.replicas, noise=spec.noise,
                                record_every=spec.record_every)
    elif spec.process == "ou":
        y0 = spec.initial if isinstance(spec.initial, (int, float)) else 0.0
        res = simulate_ou(spec.params.sigma, spec.horizon, spec.dt,
                          seed=spec.master_seed, y0=float(y0),
                          replicas=spec.replicas, record_every=spec.record_every)
    else:
        raise ValueError(f"unknown process {spec.process!r}")
    if extractor is None:
        return res
    extracted = np.array([np.asarray(extractor(res.times, res.values[i]))
                          for i in range(res.replicas)])
    return EnsembleResult(times=res.times, values=extracted, seeds=res.seeds,
                          spec_echo=res.spec_echo | {"extracted": True},
                          extras=res.extras, wall_time=res.wall_time)
