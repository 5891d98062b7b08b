"""Maximum-likelihood detectors for a quantized multi-antenna uplink.

Three detectors are provided:

* naive ML, which ignores quantization and minimizes the quadratic form
  ``(y - H^H H x)^H (H^H H)^-1 (y - H^H H x)`` on the MRC output ``y``;
* brute-force ML, which maximizes the exact likelihood of the observed
  quantizer outputs using per-cell Gaussian probabilities;
* equivalent (NLD-aware) ML, which keeps the naive quadratic form but
  replaces the predictions by ``H^H F(g H x)``, ``F`` being the quantizer's
  equivalent transfer function.

Candidate vectors enumerate the full constellation product over users in
lexicographic order of per-user symbol index (user 0 most significant), and
every arg-min/arg-max breaks ties towards the lowest candidate index.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, NumericError
from .quant import NoiseModel, etf_complex, level_index, log_output_probability
from .signals import as_channel_array

__all__ = [
    "NAIVE",
    "NLD_AWARE",
    "DetectorTable",
    "DetectionResult",
    "candidate_indices",
    "inverse_gram",
    "mrc",
    "build_table",
    "detect_quadratic",
    "quadratic_metrics",
    "bruteforce_loglik",
    "detect_bruteforce_ml",
    "complexity_naive",
    "complexity_bruteforce",
]

NAIVE = "naive"
NLD_AWARE = "nld_aware"

DEFAULT_MAX_CANDIDATES = 2 ** 20
MAX_CONDITION = 1e12
_INT64_MAX = 2 ** 63 - 1


@dataclass(frozen=True, eq=False)
class DetectorTable:
    """Precomputed search table shared by the quadratic-form detectors.

    Attributes
    ----------
    indices : np.ndarray
        ``(N, K)`` per-user constellation indices of every candidate.
    candidates : np.ndarray
        ``(N, K)`` complex candidate symbol vectors.
    predictions : np.ndarray
        ``(N, K)`` predicted noise-free MRC output for every candidate.
    a_matrix : np.ndarray
        ``(K, K)`` inverse of ``H^H H``.
    mode : str
        ``"naive"`` or ``"nld_aware"``.
    """

    indices: np.ndarray
    candidates: np.ndarray
    predictions: np.ndarray
    a_matrix: np.ndarray
    mode: str

    def __len__(self):
        return self.candidates.shape[0]

    @property
    def k_users(self):
        return self.candidates.shape[1]


@dataclass(frozen=True)
class DetectionResult:
    symbol_indices: tuple
    metric: float
    complexity_charged: int
    candidate: int


def candidate_indices(n_qam, k_users, max_candidates=DEFAULT_MAX_CANDIDATES):
    """All ``n_qam**k_users`` index vectors in lexicographic order."""
    count = n_qam ** k_users
    if count > max_candidates:
        raise CapacityError(
            f"{n_qam}^{k_users} = {count} candidates exceeds the limit of {max_candidates}"
        )
    return np.indices((n_qam,) * k_users).reshape(k_users, -1).T


def inverse_gram(channel):
    """``inv(H^H H)``, rejecting channels with condition number above 1e12."""
    h = as_channel_array(channel)
    gram = h.conj().T @ h
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericError(f"H^H H is ill-conditioned (condition number {cond:.3g})")
    return np.linalg.solve(gram, np.eye(gram.shape[0]))


def mrc(channel, adc_out):
    """Maximum ratio combining ``H^H s``; ``adc_out`` may carry leading batch axes."""
    h = as_channel_array(channel)
    adc_out = np.asarray(adc_out)
    if adc_out.shape[-1:] != (h.shape[0],):
        raise ValueError(f"expected {h.shape[0]} ADC outputs, got shape {adc_out.shape}")
    return adc_out @ h.conj()


def build_table(channel, constellation, gain=1.0, mode=NAIVE, quantizer=None, noise=None,
                max_candidates=DEFAULT_MAX_CANDIDATES):
    """Precompute candidates, MRC predictions and ``inv(H^H H)``.

    In ``naive`` mode the prediction for candidate ``x`` is ``H^H H (g x)``;
    in ``nld_aware`` mode it is ``H^H F(g H x)`` with ``F`` the complex
    equivalent transfer function of ``quantizer`` under ``noise``.
    """
    h = as_channel_array(channel)
    if mode not in (NAIVE, NLD_AWARE):
        raise ValueError(f"unknown table mode {mode!r}")
    if mode == NLD_AWARE and (quantizer is None or noise is None):
        raise ValueError("nld_aware tables need a quantizer and a noise model")
    idx = candidate_indices(constellation.n_qam, h.shape[1], max_candidates)
    cand = constellation.symbols[idx]
    a_matrix = inverse_gram(h)
    if mode == NAIVE:
        pred = (gain * cand) @ (h.conj().T @ h).T
    else:
        received = etf_complex(quantizer, noise, (gain * cand) @ h.T)
        pred = received @ h.conj()
    for arr in (idx, cand, pred, a_matrix):
        arr.setflags(write=False)
    return DetectorTable(idx, cand, pred, a_matrix, mode)


def quadratic_metrics(predictions, a_matrix, y):
    """``(y - p)^H A (y - p)`` for every prediction ``p``.

    Shapes: ``predictions (..., N, K)``, ``a_matrix (..., K, K)``,
    ``y (..., K)``; returns ``(..., N)``.
    """
    d = y[..., None, :] - predictions
    ad = d @ np.swapaxes(a_matrix, -1, -2)
    return np.einsum("...nk,...nk->...n", d.conj(), ad).real


def detect_quadratic(table, y):
    """Naive or equivalent ML decision on one MRC output vector ``y``."""
    y = np.asarray(y, dtype=complex).reshape(-1)
    if y.shape != (table.k_users,):
        raise ValueError(f"expected MRC output of length {table.k_users}, got {y.shape}")
    metrics = quadratic_metrics(table.predictions, table.a_matrix, y)
    best = int(np.argmin(metrics))
    n, k = table.predictions.shape
    # A @ d costs K^2 per candidate, the inner product K more
    charged = n * table.a_matrix.size + n * k
    return DetectionResult(tuple(int(i) for i in table.indices[best]),
                           float(metrics[best]), charged, best)


def bruteforce_loglik(channel_entries, adc_out, quantizer, noise, candidates, gain=1.0):
    """Log-likelihood of the observed quantizer outputs for every candidate.

    ``channel_entries (..., M, K)``, ``adc_out (..., M)``, ``candidates
    (N, K)`` and an optional per-batch ``noise`` variance; returns
    ``(..., N)``.  ``adc_out`` must already be validated quantizer output.
    """
    s_l = gain * np.einsum("nk,...mk->...nm", candidates, channel_entries)
    re_idx = level_index(quantizer, np.asarray(adc_out).real)[..., None, :]
    im_idx = level_index(quantizer, np.asarray(adc_out).imag)[..., None, :]
    if not isinstance(noise, NoiseModel):
        noise = np.asarray(noise, dtype=float)[..., None, None]
    ll = (log_output_probability(quantizer, noise, s_l.real, re_idx)
          + log_output_probability(quantizer, noise, s_l.imag, im_idx))
    return ll.sum(axis=-1)


def detect_bruteforce_ml(channel, adc_out, quantizer, noise, constellation, gain=1.0,
                         max_candidates=DEFAULT_MAX_CANDIDATES):
    """Exhaustive likelihood maximization over the raw quantizer outputs."""
    h = as_channel_array(channel)
    adc_out = np.asarray(adc_out, dtype=complex).reshape(-1)
    if adc_out.shape != (h.shape[0],):
        raise ValueError(f"expected {h.shape[0]} ADC outputs, got shape {adc_out.shape}")
    idx = candidate_indices(constellation.n_qam, h.shape[1], max_candidates)
    cand = constellation.symbols[idx]
    ll = bruteforce_loglik(h, adc_out, quantizer, noise, cand, gain)
    best = int(np.argmax(ll))
    m, k = h.shape
    # K multiplies to form each s_l(m), one per output probability
    charged = len(cand) * m * (k + 1)
    return DetectionResult(tuple(int(i) for i in idx[best]), float(ll[best]), charged, best)


def _check_counts(m, k, n_qam):
    for name, v in (("M", m), ("K", k), ("n_qam", n_qam)):
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")


def complexity_naive(m, k, n_qam):
    """Complex multiplies of naive/equivalent ML: ``M*K + (K^2 + K) * n_qam^K``."""
    _check_counts(m, k, n_qam)
    c = m * k + (k * k + k) * n_qam ** k
    if c > _INT64_MAX:
        raise CapacityError(f"complexity {c} overflows a 64-bit counter")
    return c


def complexity_bruteforce(m, k, n_qam):
    """Complex multiplies of brute-force ML: ``M * (K + 1) * n_qam^K``."""
    _check_counts(m, k, n_qam)
    c = m * (k + 1) * n_qam ** k
    if c > _INT64_MAX:
        raise CapacityError(f"complexity {c} overflows a 64-bit counter")
    return c
