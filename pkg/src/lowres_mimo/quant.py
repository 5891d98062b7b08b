"""Uniform mid-rise quantizer and its equivalent model under Gaussian input noise.

A ``bits``-bit quantizer with step ``delta`` has ``R = 2**bits`` output
levels ``q_r = (2r - R - 1) * delta / 2`` (``r = 1..R``) and decision cells
``[q_r - delta/2, q_r + delta/2)``; the two outermost cells extend to
infinity.

When the quantizer input is ``s_l + n`` with ``n ~ N(0, sigma2)``, the
expected output conditioned on the noise-free part,

    F(s_l) = E[Q(s_l + n) | s_l] = sum_r q_r * Pr(Q = q_r | s_l),

is the *equivalent transfer function* (ETF).  The residual
``n_o = Q(s_l + n) - F(s_l)`` is zero mean and uncorrelated with ``s_l``.

All functions accept numpy arrays and broadcast elementwise.  Complex
quantities are handled as independent real/imaginary quantizer pairs.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, log_ndtr, ndtr

__all__ = [
    "QuantizerSpec",
    "NoiseModel",
    "make_quantizer",
    "quantize_real",
    "quantize_complex",
    "level_index",
    "cell_probabilities",
    "output_probability",
    "log_output_probability",
    "etf_real",
    "etf_complex",
    "equivalent_noise",
    "LOG_PROB_FLOOR",
]

MAX_BITS = 16

#: per-factor floor used by the log-likelihood kernel, log(1e-300)
LOG_PROB_FLOOR = float(np.log(1e-300))


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform symmetric mid-rise quantizer.

    Attributes
    ----------
    bits : int
        Resolution in bits.
    delta : float
        Quantization step (amplitude units).
    R : int
        Number of output levels, ``2**bits``.
    levels : np.ndarray
        Increasing output levels ``q_1 < ... < q_R``.
    thresholds : np.ndarray
        The ``R - 1`` interior cell boundaries, ``levels[:-1] + delta/2``.
    """

    bits: int
    delta: float = 2.0
    R: int = field(init=False)
    levels: np.ndarray = field(init=False, repr=False, compare=False)
    thresholds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        R = 2 ** self.bits
        r = np.arange(1, R + 1)
        levels = (2 * r - R - 1) * self.delta / 2
        thresholds = levels[:-1] + self.delta / 2
        levels.setflags(write=False)
        thresholds.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "thresholds", thresholds)

    @property
    def max_level(self):
        """Saturation level ``(R - 1) * delta / 2``."""
        return (self.R - 1) * self.delta / 2

    @property
    def lower_edges(self):
        """Lower edge of every cell, ``-inf`` for the first one."""
        return np.concatenate(([-np.inf], self.thresholds))

    @property
    def upper_edges(self):
        """Upper edge of every cell, ``+inf`` for the last one."""
        return np.concatenate((self.thresholds, [np.inf]))


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian ADC input noise.

    ``sigma2`` is the variance of each *real* component; a complex ADC pair
    therefore sees complex noise of total variance ``2 * sigma2``.
    """

    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be finite and > 0, got {self.sigma2!r}")

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))


def make_quantizer(bits, delta=2.0):
    """Build a ``bits``-bit mid-rise quantizer with step ``delta``."""
    if isinstance(bits, bool) or int(bits) != bits or not 1 <= bits <= MAX_BITS:
        raise ValueError(f"bits must be an integer in [1, {MAX_BITS}], got {bits!r}")
    if not (np.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be finite and > 0, got {delta!r}")
    return QuantizerSpec(int(bits), float(delta))


def _sigma2_of(noise):
    sigma2 = np.asarray(noise.sigma2 if isinstance(noise, NoiseModel) else noise, dtype=float)
    if not (np.all(np.isfinite(sigma2)) and np.all(sigma2 >= 0)):
        raise ValueError("sigma2 must be finite and >= 0")
    return sigma2


def _finite(x, name="s"):
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


def quantize_real(spec, s):
    """Quantize real input(s): ``delta * (floor(s/delta) + 1/2)``, clamped to the level range."""
    s = _finite(s).astype(float, copy=False)
    half_span = (spec.R - 1) / 2
    idx = np.clip(np.floor(s / spec.delta) + 0.5, -half_span, half_span)
    return (idx * spec.delta)[()]


def quantize_complex(spec, s):
    """Quantize real and imaginary parts independently."""
    s = _finite(s)
    return (quantize_real(spec, s.real) + 1j * quantize_real(spec, s.imag))[()]


def level_index(spec, q):
    """Map quantizer output values to zero-based level indices.

    Raises ``ValueError`` if any value is not one of ``spec.levels``.
    """
    q = _finite(q, "quantizer output")
    pos = q / spec.delta + (spec.R - 1) / 2
    idx = np.rint(pos)
    if np.any(np.abs(pos - idx) > 1e-9) or np.any(idx < 0) or np.any(idx > spec.R - 1):
        raise ValueError("value is not a valid quantizer output level")
    return idx.astype(np.intp)[()]


def cell_probabilities(spec, noise, s_l):
    """Probabilities of every output level given noise-free input ``s_l``.

    Returns an array of shape ``np.shape(s_l) + (R,)`` whose last axis sums
    to one.  A cell lying entirely above ``s_l`` is evaluated as a difference
    of upper-tail probabilities, every other cell as a difference of lower
    CDF values, so the small saturation tails keep their relative accuracy.
    ``noise`` may also be an array of variances broadcasting against ``s_l``.
    """
    sigma2 = _sigma2_of(noise)
    if np.any(sigma2 == 0):
        raise ValueError("cell probabilities need sigma2 > 0")
    s_l = _finite(s_l, "s_l").astype(float, copy=False)
    s_l, sigma = np.broadcast_arrays(s_l, np.sqrt(sigma2))
    z = (spec.thresholds - s_l[..., None]) / sigma[..., None]
    pad_shape = s_l.shape + (1,)
    lower = np.concatenate((np.zeros(pad_shape), ndtr(z), np.ones(pad_shape)), axis=-1)
    upper = np.concatenate((np.ones(pad_shape), ndtr(-z), np.zeros(pad_shape)), axis=-1)
    # z of each cell's lower edge; the first cell starts at -inf
    above = np.concatenate((np.full(pad_shape, False), z > 0), axis=-1)
    return np.where(above, upper[..., :-1] - upper[..., 1:], lower[..., 1:] - lower[..., :-1])


def output_probability(spec, noise, s_l, r):
    """``Pr(Q(s_l + n) = q_r)`` for the one-based level index ``r``."""
    if isinstance(r, bool) or int(r) != r or not 1 <= r <= spec.R:
        raise ValueError(f"level index r must be in [1, {spec.R}], got {r!r}")
    return cell_probabilities(spec, noise, s_l)[..., int(r) - 1][()]


def log_output_probability(spec, noise, s_l, index):
    """Natural log of ``Pr(Q(s_l + n) = q)`` for zero-based level ``index``.

    ``s_l``, ``index`` and ``noise`` (a :class:`NoiseModel` or an array of
    per-component variances) broadcast against each other.  Each value is
    floored at :data:`LOG_PROB_FLOOR` so that products over many antennas
    never collapse to ``-inf``.
    """
    sigma2 = _sigma2_of(noise)
    if np.any(sigma2 == 0):
        raise ValueError("log probabilities need sigma2 > 0")
    sigma = np.sqrt(sigma2)
    s_l = np.asarray(s_l, dtype=float)
    index = np.asarray(index)
    a = (spec.lower_edges[index] - s_l) / sigma
    b = (spec.upper_edges[index] - s_l) / sigma
    # log(P(u) - P(v)) = log P(u) + log1p(-P(v)/P(u)), with u the larger tail;
    # the top cell is always an upper tail so that P(v) = 0 there
    above = (a > 0) | (index == spec.R - 1)
    u = np.where(above, -a, b)
    logp = log_ndtr(u)
    interior = (index > 0) & (index < spec.R - 1)
    if np.any(interior):
        # saturation cells have P(v) = 0 and need no correction
        v = np.where(above, -b, a)
        logp, v, interior = np.broadcast_arrays(logp, v, interior)
        logp = logp.copy()
        lu = logp[interior]
        logp[interior] = lu + np.log1p(-np.exp(log_ndtr(v[interior]) - lu))
    return np.maximum(logp, LOG_PROB_FLOOR)[()]


def etf_real(spec, noise, s_l):
    """Equivalent transfer function ``F(s_l) = sum_r q_r Pr(q_r | s_l)``.

    Summing by parts over the cells gives one error function per threshold,

        F(s_l) = (delta/2) * sum_t erf((s_l - t) / sqrt(2 * sigma2)),

    which is what is evaluated.  ``noise`` may be a :class:`NoiseModel`, a
    bare per-component variance or an array of variances broadcasting
    against ``s_l``.  A scalar variance of exactly zero returns
    ``quantize_real(spec, s_l)``.
    """
    sigma2 = _sigma2_of(noise)
    if sigma2.ndim == 0 and sigma2 == 0:
        return quantize_real(spec, s_l)
    if np.any(sigma2 == 0):
        raise ValueError("array-valued sigma2 must be > 0")
    s_l = _finite(s_l, "s_l").astype(float, copy=False)
    scale = np.sqrt(2 * sigma2)
    out = np.zeros(np.broadcast_shapes(s_l.shape, sigma2.shape))
    for t in spec.thresholds:
        out += erf((s_l - t) / scale)
    return (out * (spec.delta / 2))[()]


def etf_complex(spec, noise, s_l):
    """Complex ETF, ``F(Re s_l) + 1j * F(Im s_l)``."""
    s_l = _finite(s_l, "s_l")
    return (etf_real(spec, noise, s_l.real) + 1j * etf_real(spec, noise, s_l.imag))[()]


def equivalent_noise(spec, noise, s_l, s_o):
    """Equivalent noise ``s_o - F(s_l)`` of a complex quantizer output."""
    s_o = _finite(s_o, "s_o")
    level_index(spec, s_o.real)
    level_index(spec, s_o.imag)
    return (s_o - etf_complex(spec, noise, s_l))[()]
