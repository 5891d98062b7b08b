"""Seeded Monte Carlo engine for BER/SER sweeps and equivalent-model checks.

Every trial draws its randomness from its own generator, seeded by
``SeedSequence(base_seed, spawn_key=(snr_key, trial_index))`` where
``snr_key`` is the IEEE-754 bit pattern of the SNR point.  Trials are
evaluated in fixed, index-aligned chunks of ``chunk_size``; workers only
change the order in which chunks are computed, and the per-receiver stopping
rule is applied afterwards in trial order, so every aggregate is
independent of the degree of parallelism.
"""

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from .quant import etf_complex, make_quantizer, quantize_complex
from .rx import (
    DEFAULT_MAX_CANDIDATES,
    NLD_AWARE,
    bruteforce_loglik,
    build_table,
    candidate_indices,
    inverse_gram,
    quadratic_metrics,
)
from .signals import SUPPORTED_QAM, ChannelMatrix, make_qam, sigma_from_snr

__all__ = [
    "RECEIVERS",
    "CHANNEL_MODES",
    "SimConfig",
    "BerRecord",
    "auto_gain",
    "resolve_gain",
    "trial_rng",
    "run_trial",
    "run_sweep",
    "wilson_interval",
    "equivalent_noise_statistics",
    "mrc_realizations",
    "conditional_mean_check",
]

RECEIVERS = ("naive_ml", "bruteforce_ml", "equivalent_ml", "ideal_ml")
CHANNEL_MODES = ("los_random_angle", "fixed_angle", "iid_gaussian")

_Z95 = NormalDist().inv_cdf(0.975)


@dataclass(frozen=True)
class SimConfig:
    """One link-level experiment.

    ``quantizer_bits=None`` models ideal (unquantized) ADCs, for which only
    the naive detector is meaningful.  ``gain`` is the real ADC input gain
    or ``"auto"`` (see :func:`auto_gain`).  ``ideal_ml`` runs the naive
    detector on the unquantized samples of the same trial, which gives the
    ideal-ADC reference curve alongside the quantized receivers.
    """

    m_antennas: int = 1024
    k_users: int = 1
    qam_order: int = 64
    quantizer_bits: object = 1
    delta: float = 2.0
    gain: object = 1.0
    snr_points_db: tuple = (20.0, 25.0, 30.0, 35.0, 40.0)
    max_trials: int = 20000
    target_bit_errors: int = 200
    base_seed: int = 0
    channel_mode: str = "los_random_angle"
    alpha: object = None
    receivers: tuple = ("naive_ml", "bruteforce_ml", "equivalent_ml")
    chunk_size: int = 32
    max_candidates: int = DEFAULT_MAX_CANDIDATES

    def __post_init__(self):
        object.__setattr__(self, "snr_points_db", tuple(float(s) for s in self.snr_points_db))
        object.__setattr__(self, "receivers", tuple(self.receivers))
        if self.quantizer_bits in ("ideal", None):
            object.__setattr__(self, "quantizer_bits", None)
        for name in ("m_antennas", "k_users", "max_trials", "chunk_size"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.target_bit_errors < 1:
            raise ValueError("target_bit_errors must be >= 1")
        if not self.snr_points_db:
            raise ValueError("snr_points_db must not be empty")
        if not all(math.isfinite(s) for s in self.snr_points_db):
            raise ValueError("snr points must be finite")
        if self.qam_order not in SUPPORTED_QAM:
            raise ValueError(f"qam_order must be one of {SUPPORTED_QAM}")
        if self.quantizer_bits is not None:
            make_quantizer(self.quantizer_bits, self.delta)
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}")
        if self.channel_mode == "fixed_angle" and self.alpha is None:
            raise ValueError("fixed_angle mode needs alpha")
        if self.channel_mode != "iid_gaussian" and self.k_users != 1:
            raise ValueError("line-of-sight channels are single-user; use iid_gaussian for K > 1")
        if not self.receivers or len(set(self.receivers)) != len(self.receivers):
            raise ValueError("receivers must be a non-empty list without repeats")
        unknown = set(self.receivers) - set(RECEIVERS)
        if unknown:
            raise ValueError(f"unknown receivers {sorted(unknown)}")
        if self.quantizer_bits is None and set(self.receivers) - {"naive_ml", "ideal_ml"}:
            raise ValueError("ideal ADCs support only naive_ml / ideal_ml")
        if self.gain != "auto" and not (isinstance(self.gain, (int, float)) and self.gain > 0):
            raise ValueError(f"gain must be a positive number or 'auto', got {self.gain!r}")
        if self.qam_order ** self.k_users > self.max_candidates:
            candidate_indices(self.qam_order, self.k_users, self.max_candidates)

    @property
    def bits_per_trial(self):
        return self.k_users * int(round(math.log2(self.qam_order)))

    def to_dict(self):
        d = asdict(self)
        d["snr_points_db"] = list(self.snr_points_db)
        d["receivers"] = list(self.receivers)
        if d["quantizer_bits"] is None:
            d["quantizer_bits"] = "ideal"
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class BerRecord:
    receiver: str
    snr_db: float
    trials: int
    bits: int
    bit_errors: int
    symbol_errors: int
    ber: float
    ser: float
    ci_low: float
    ci_high: float

    @property
    def ci_halfwidth(self):
        return (self.ci_high - self.ci_low) / 2


def wilson_interval(errors, n, z=_Z95):
    """95% Wilson score interval for a binomial error probability."""
    if isinstance(n, bool) or n < 1 or not 0 <= errors <= n:
        raise ValueError(f"need 0 <= errors <= n and n >= 1, got {errors}, {n}")
    p = errors / n
    z2 = z * z
    denom = 1 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def auto_gain(config, snr_db):
    """ADC input gain from the AGC rule.

    The gain makes the RMS of each real component of ``g * s_l + noise``
    equal a target: ``(R - 2) * delta / 4`` (half the saturation threshold)
    for multi-bit quantizers, and ``sqrt(2/pi) * delta / 2`` for one bit,
    where that RMS gives the quantizer unit small-signal gain in the
    noise-dominated regime.  Channel power is taken at its expectation,
    one per entry, for every supported channel model.
    """
    if config.quantizer_bits is None:
        return 1.0
    R = 2 ** config.quantizer_bits
    if R == 2:
        target = math.sqrt(2 / math.pi) * config.delta / 2
    else:
        target = (R - 2) * config.delta / 4
    snr = 10 ** (snr_db / 10)
    # per-real signal power K/2 per unit gain, noise M*K/(2 snr)
    per_real = config.k_users * (1 + config.m_antennas / snr) / 2
    return target / math.sqrt(per_real)


def resolve_gain(config, snr_db):
    return auto_gain(config, snr_db) if config.gain == "auto" else float(config.gain)


def _snr_key(snr_db):
    return struct.unpack("<Q", struct.pack("<d", float(snr_db)))[0]


def trial_rng(base_seed, snr_db, trial_index):
    """Independent generator for one trial."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(_snr_key(snr_db), int(trial_index)))
    return np.random.default_rng(ss)


class _SnrContext:
    """Immutable per-SNR-point state shared by all trials at that point."""

    def __init__(self, config, snr_db):
        self.config = config
        self.snr_db = snr_db
        self.snr = 10 ** (snr_db / 10)
        self.qam = make_qam(config.qam_order)
        self.gain = resolve_gain(config, snr_db)
        self.quantizer = (None if config.quantizer_bits is None
                          else make_quantizer(config.quantizer_bits, config.delta))
        self.idx = candidate_indices(config.qam_order, config.k_users, config.max_candidates)
        self.cands = self.qam.symbols[self.idx]
        self.fixed = None
        if config.channel_mode == "fixed_angle":
            h = _los(config.m_antennas, np.array([config.alpha]))[0]
            noise = sigma_from_snr(snr_db, h, self.qam, self.gain)
            tables = {"naive": build_table(h, self.qam, self.gain, max_candidates=config.max_candidates)}
            if self.quantizer is not None:
                tables["nld_aware"] = build_table(h, self.qam, self.gain, NLD_AWARE, self.quantizer,
                                                  noise, config.max_candidates)
            self.fixed = (h, noise, tables)


def _los(m_antennas, alphas):
    m = np.arange(1, m_antennas + 1)
    return np.exp(1j * np.pi * np.sin(alphas)[:, None, None] * m[None, :, None])


def _draw(ctx, trial_indices):
    """Channel, symbols and unit noise for a batch of trials."""
    cfg = ctx.config
    M, K = cfg.m_antennas, cfg.k_users
    T = len(trial_indices)
    alphas = np.empty(T)
    h = np.empty((T, M, K), complex)
    sym = np.empty((T, K), np.intp)
    w = np.empty((T, M), complex)
    for t, i in enumerate(trial_indices):
        rng = trial_rng(cfg.base_seed, ctx.snr_db, i)
        if cfg.channel_mode == "los_random_angle":
            alphas[t] = rng.uniform(-np.pi, np.pi)
        elif cfg.channel_mode == "iid_gaussian":
            h[t] = (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / np.sqrt(2)
        sym[t] = rng.integers(0, cfg.qam_order, size=K)
        w[t] = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    if cfg.channel_mode == "los_random_angle":
        h = _los(M, alphas)
    elif cfg.channel_mode == "fixed_angle":
        h = np.broadcast_to(ctx.fixed[0], (T, M, K))
    return h, sym, w


def _simulate(ctx, trial_indices, receivers):
    """Decided symbol indices ``(T, K)`` per receiver, plus the true ones."""
    cfg = ctx.config
    g = ctx.gain
    h, sym, w = _draw(ctx, trial_indices)
    x = ctx.qam.symbols[sym]
    if ctx.fixed is not None:
        sigma2 = np.full(len(trial_indices), ctx.fixed[1].sigma2)
    else:
        power = g ** 2 * np.sum(np.abs(h) ** 2, axis=(1, 2)) * ctx.qam.mean_energy()
        sigma2 = power / ctx.snr / 2
    s_l = g * np.einsum("tmk,tk->tm", h, x)
    r = s_l + np.sqrt(sigma2)[:, None] * w
    hh = np.conj(np.swapaxes(h, 1, 2))

    naive = None
    if {"naive_ml", "ideal_ml"} & set(receivers):
        if ctx.fixed is not None:
            t_naive = ctx.fixed[2]["naive"]
            pred, a = t_naive.predictions, t_naive.a_matrix
        else:
            gram = hh @ h
            a = np.stack([inverse_gram(ChannelMatrix(hi)) for hi in h]) if cfg.k_users > 1 \
                else 1.0 / gram.real
            pred = g * np.einsum("nk,tlk->tnl", ctx.cands, gram)
        naive = (pred, a)

    out = {}
    if "ideal_ml" in receivers:
        y = np.einsum("tkm,tm->tk", hh, r)
        out["ideal_ml"] = _argmin(quadratic_metrics(naive[0], naive[1], y), ctx)
    if ctx.quantizer is None:
        if "naive_ml" in receivers:
            y = np.einsum("tkm,tm->tk", hh, r)
            out["naive_ml"] = _argmin(quadratic_metrics(naive[0], naive[1], y), ctx)
        return out, sym

    s_o = quantize_complex(ctx.quantizer, r)
    y = np.einsum("tkm,tm->tk", hh, s_o)
    if "naive_ml" in receivers:
        out["naive_ml"] = _argmin(quadratic_metrics(naive[0], naive[1], y), ctx)
    if "equivalent_ml" in receivers:
        if ctx.fixed is not None:
            t_eq = ctx.fixed[2]["nld_aware"]
            pred, a = t_eq.predictions, t_eq.a_matrix
        else:
            s_cand = g * np.einsum("nk,tmk->tnm", ctx.cands, h)
            f = etf_complex(ctx.quantizer, sigma2[:, None, None], s_cand)
            pred = np.einsum("tnm,tmk->tnk", f, np.conj(h))
            a = naive[1] if naive is not None else _inverse_grams(h, hh)
        out["equivalent_ml"] = _argmin(quadratic_metrics(pred, a, y), ctx)
    if "bruteforce_ml" in receivers:
        ll = bruteforce_loglik(h, s_o, ctx.quantizer, sigma2, ctx.cands, g)
        out["bruteforce_ml"] = ctx.idx[np.argmax(ll, axis=-1)]
    return out, sym


def _inverse_grams(h, hh):
    if h.shape[2] == 1:
        return 1.0 / (hh @ h).real
    return np.stack([inverse_gram(ChannelMatrix(hi)) for hi in h])


def _argmin(metrics, ctx):
    return ctx.idx[np.argmin(metrics, axis=-1)]


def run_trial(config, snr_db, trial_index):
    """Run one trial; returns ``{receiver: (decided_bits, true_bits)}``.

    Bits are uint8 arrays of length ``K * log2(qam_order)``; the result is a
    deterministic function of ``(config.base_seed, snr_db, trial_index)``.
    """
    ctx = _SnrContext(config, float(snr_db))
    decided, true = _simulate(ctx, [trial_index], config.receivers)
    labels = ctx.qam.bit_labels
    true_bits = labels[true[0]].reshape(-1)
    return {rx: (labels[d[0]].reshape(-1), true_bits) for rx, d in decided.items()}


def _chunk_errors(ctx, start, receivers):
    cfg = ctx.config
    stop = min(start + cfg.chunk_size, cfg.max_trials)
    decided, true = _simulate(ctx, range(start, stop), receivers)
    labels = ctx.qam.bit_labels
    res = {}
    for rx, d in decided.items():
        bit_err = np.sum(labels[d] != labels[true], axis=(1, 2))
        sym_err = np.sum(d != true, axis=1)
        res[rx] = (bit_err, sym_err)
    return res


def _sweep_point(config, snr_db, executor):
    ctx = _SnrContext(config, snr_db)
    state = {rx: {"trials": 0, "bit": 0, "sym": 0, "done": False} for rx in config.receivers}
    starts = range(0, config.max_trials, config.chunk_size)
    pending = []  # (start, future) in trial order
    next_chunk = 0
    workers = executor._max_workers if executor is not None else 1

    def active():
        return tuple(rx for rx in config.receivers if not state[rx]["done"])

    while True:
        while next_chunk < len(starts) and len(pending) < workers and active():
            start = starts[next_chunk]
            if executor is None:
                fut = _chunk_errors(ctx, start, active())
            else:
                fut = executor.submit(_chunk_errors, ctx, start, active())
            pending.append(fut)
            next_chunk += 1
        if not pending:
            break
        fut = pending.pop(0)
        res = fut if executor is None else fut.result()
        for rx, (bit_err, sym_err) in res.items():
            st = state[rx]
            if st["done"]:
                continue
            for b, s in zip(bit_err, sym_err):
                st["trials"] += 1
                st["bit"] += int(b)
                st["sym"] += int(s)
                if st["bit"] >= config.target_bit_errors or st["trials"] >= config.max_trials:
                    st["done"] = True
                    break
        if not active():
            for f in pending:
                if executor is not None:
                    f.cancel()
            break

    records = []
    for rx in config.receivers:
        st = state[rx]
        n_bits = st["trials"] * config.bits_per_trial
        n_sym = st["trials"] * config.k_users
        lo, hi = wilson_interval(st["bit"], n_bits)
        records.append(BerRecord(rx, snr_db, st["trials"], n_bits, st["bit"], st["sym"],
                                 st["bit"] / n_bits, st["sym"] / n_sym, lo, hi))
    return records


def run_sweep(config, workers=1, progress=None):
    """BER records for every (SNR point, receiver), in config order.

    ``progress``, if given, is called with each finished :class:`BerRecord`.
    """
    records = []
    executor = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for snr_db in config.snr_points_db:
            for rec in _sweep_point(config, snr_db, executor):
                records.append(rec)
                if progress is not None:
                    progress(rec)
    finally:
        if executor is not None:
            executor.shutdown(cancel_futures=True)
    return records


# ----------------------------------------------------------------------------
# Equivalent-model statistics
# ----------------------------------------------------------------------------

@dataclass
class NoiseStatistics:
    """Sample moments of the equivalent noise and their z-scores.

    Every ``*_z`` array holds (estimate / standard error) for the real and
    imaginary parts of the corresponding sample mean.
    """

    trials: int
    mean_z: np.ndarray
    input_corr_z: np.ndarray
    cross_corr_z: np.ndarray
    pairs: list = field(default_factory=list)

    def max_abs_z(self):
        return float(max(np.max(np.abs(z)) for z in (self.mean_z, self.input_corr_z, self.cross_corr_z)))


def _z(samples):
    """z-scores of the sample mean of complex ``samples`` along axis 0."""
    n = samples.shape[0]
    out = []
    for part in (samples.real, samples.imag):
        se = part.std(axis=0, ddof=1) / math.sqrt(n)
        out.append(np.where(se > 0, part.mean(axis=0) / np.where(se > 0, se, 1), 0.0))
    return np.stack(out, axis=-1)


DEFAULT_PAIRS = ((0, 1), (0, 63), (10, 37), (31, 32), (62, 5))


def equivalent_noise_statistics(m_antennas=64, bits=1, qam_order=64, trials=100_000,
                                snr_db=20.0, seed=0, pairs=DEFAULT_PAIRS, gain=1.0,
                                batch=5000):
    """Sample the equivalent noise over a random LOS/QAM ensemble.

    For each trial a fresh angle of arrival and symbol are drawn, the
    quantizer output ``s_o = Q(s_l + n)`` is formed and the equivalent noise
    ``n_o = s_o - F(s_l)`` recorded.  Reported z-scores cover the mean of
    ``n_o(m)`` for every antenna, ``n_o(m) * s_l(n)`` and
    ``n_o(m) * conj(s_l(n))`` for the listed pairs and ``m == n``, and
    ``n_o(m) * n_o(n)``, ``n_o(m) * conj(n_o(n))`` for the pairs.
    """
    spec = make_quantizer(bits)
    qam = make_qam(qam_order)
    pairs = [p for p in pairs if max(p) < m_antennas]
    noise = sigma_from_snr(snr_db, np.ones((m_antennas, 1)), qam, gain)
    mi = np.array([p[0] for p in pairs])
    ni = np.array([p[1] for p in pairs])
    mean_parts, in_parts, cross_parts = [], [], []
    for b, start in enumerate(range(0, trials, batch)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        t = min(batch, trials - start)
        alphas = rng.uniform(-np.pi, np.pi, t)
        h = _los(m_antennas, alphas)[:, :, 0]
        x = qam.symbols[rng.integers(0, qam_order, t)]
        s_l = gain * h * x[:, None]
        w = noise.sigma * (rng.standard_normal((t, m_antennas)) + 1j * rng.standard_normal((t, m_antennas)))
        n_o = quantize_complex(spec, s_l + w) - etf_complex(spec, noise, s_l)
        mean_parts.append(n_o)
        in_parts.append(np.concatenate((n_o[:, mi] * s_l[:, ni], n_o[:, mi] * np.conj(s_l[:, ni]),
                                        n_o[:, mi] * s_l[:, mi], n_o[:, mi] * np.conj(s_l[:, mi])), axis=1))
        cross_parts.append(np.concatenate((n_o[:, mi] * n_o[:, ni], n_o[:, mi] * np.conj(n_o[:, ni])), axis=1))
    return NoiseStatistics(
        trials,
        _z(np.concatenate(mean_parts)),
        _z(np.concatenate(in_parts)),
        _z(np.concatenate(cross_parts)),
        pairs,
    )


@dataclass
class ConstellationData:
    """Predicted and simulated MRC outputs of a fixed-channel configuration."""

    predictions: np.ndarray     # (n_qam,) complex, nld_aware table
    symbols: np.ndarray         # (n,) true symbol index of each realization
    realizations: np.ndarray    # (n,) complex MRC outputs
    snr_db: float
    sigma2: float


def mrc_realizations(m_antennas=1024, bits=1, qam_order=64, alpha=np.pi / 12, snr_db=30.0,
                     per_symbol=500, seed=0, gain=1.0, batch=64):
    """Simulate single-user MRC outputs at a fixed angle of arrival.

    Realization ``i`` transmits symbol ``i % qam_order``, so each symbol
    gets exactly ``per_symbol`` realizations.  Batch ``b`` draws its noise
    from ``SeedSequence(seed, spawn_key=(b,))``.
    """
    spec = make_quantizer(bits)
    qam = make_qam(qam_order)
    h = _los(m_antennas, np.array([alpha]))[0]
    noise = sigma_from_snr(snr_db, h, qam, gain)
    table = build_table(h, qam, gain, NLD_AWARE, spec, noise)
    n = per_symbol * qam_order
    sym = np.arange(n) % qam_order
    y = np.empty(n, complex)
    hv = h[:, 0]
    for b, start in enumerate(range(0, n, batch)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        s = sym[start:start + batch]
        s_l = gain * qam.symbols[s][:, None] * hv
        w = noise.sigma * (rng.standard_normal(s_l.shape) + 1j * rng.standard_normal(s_l.shape))
        y[start:start + batch] = quantize_complex(spec, s_l + w) @ np.conj(hv)
    return ConstellationData(table.predictions[:, 0].copy(), sym, y, snr_db, noise.sigma2)


def conditional_mean_check(data):
    """Per-symbol z-scores of ``mean(MRC output) - prediction``.

    Returns an ``(n_qam, 2)`` array (real, imaginary part).
    """
    n_qam = len(data.predictions)
    z = np.empty((n_qam, 2))
    for j in range(n_qam):
        yj = data.realizations[data.symbols == j]
        dev = yj - data.predictions[j]
        for c, part in enumerate((dev.real, dev.imag)):
            z[j, c] = part.mean() / (part.std(ddof=1) / math.sqrt(len(part)))
    return z
