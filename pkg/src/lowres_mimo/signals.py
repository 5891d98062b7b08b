"""QAM constellations, channel generators, noise sampling and SNR bookkeeping."""

from dataclasses import dataclass

import numpy as np

from .quant import NoiseModel

__all__ = [
    "QamConstellation",
    "ChannelMatrix",
    "SUPPORTED_QAM",
    "make_qam",
    "los_channel",
    "iid_channel",
    "sample_angle",
    "sigma_from_snr",
    "sample_noise",
]

SUPPORTED_QAM = (4, 16, 64, 256)


@dataclass(frozen=True, eq=False)
class QamConstellation:
    """Square QAM alphabet with unit average energy.

    Symbol ``i`` has in-phase level index ``i // L`` and quadrature level
    index ``i % L`` (``L = sqrt(n_qam)``); level index ``a`` sits at
    amplitude ``(2a - L + 1) * norm``.  Its bit label is the reflected Gray
    code of the in-phase index followed by that of the quadrature index,
    most significant bit first.

    Attributes
    ----------
    n_qam : int
        Constellation order.
    symbols : np.ndarray
        Complex points, shape ``(n_qam,)``.
    bit_labels : np.ndarray
        uint8 array of shape ``(n_qam, bits_per_symbol)``.
    norm : float
        Per-axis scale making the mean symbol energy one.
    """

    n_qam: int
    symbols: np.ndarray
    bit_labels: np.ndarray
    norm: float

    @property
    def bits_per_symbol(self):
        return self.bit_labels.shape[1]

    @property
    def side(self):
        return int(round(np.sqrt(self.n_qam)))

    def label(self, index):
        """Bit label of symbol ``index`` as a string, e.g. ``'011010'``."""
        return "".join(str(b) for b in self.bit_labels[index])

    def mean_energy(self):
        return float(np.mean(np.abs(self.symbols) ** 2))


def _gray_bits(values, width):
    gray = values ^ (values >> 1)
    shifts = np.arange(width - 1, -1, -1)
    return ((gray[:, None] >> shifts) & 1).astype(np.uint8)


def make_qam(n_qam):
    """Unit-energy square QAM with per-axis Gray labels."""
    if n_qam not in SUPPORTED_QAM:
        raise ValueError(f"n_qam must be one of {SUPPORTED_QAM}, got {n_qam!r}")
    L = int(round(np.sqrt(n_qam)))
    half_bits = L.bit_length() - 1
    # mean of (2a - L + 1)^2 over a is (L^2 - 1)/3 per axis
    norm = 1.0 / np.sqrt(2 * (L * L - 1) / 3)
    amp = (2 * np.arange(L) - L + 1) * norm
    i_idx, q_idx = np.divmod(np.arange(n_qam), L)
    symbols = amp[i_idx] + 1j * amp[q_idx]
    labels = np.hstack((_gray_bits(i_idx, half_bits), _gray_bits(q_idx, half_bits)))
    symbols.setflags(write=False)
    labels.setflags(write=False)
    return QamConstellation(n_qam, symbols, labels, float(norm))


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """``M x K`` complex channel; column ``k`` is user ``k``'s array response."""

    entries: np.ndarray

    def __post_init__(self):
        h = np.array(self.entries, dtype=complex)
        if h.ndim == 1:
            h = h[:, None]
        if h.ndim != 2 or h.size == 0:
            raise ValueError(f"channel must be a non-empty M x K matrix, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel entries must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)

    @property
    def m_antennas(self):
        return self.entries.shape[0]

    @property
    def k_users(self):
        return self.entries.shape[1]

    def gram(self):
        """``H^H H``."""
        return self.entries.conj().T @ self.entries


def as_channel_array(channel):
    """Return the raw ``M x K`` array of a :class:`ChannelMatrix` or array-like."""
    if isinstance(channel, ChannelMatrix):
        return channel.entries
    return ChannelMatrix(channel).entries


def los_channel(m_antennas, alpha):
    """Single-user line-of-sight array response ``exp(1j*pi*sin(alpha)*m)``, ``m = 1..M``."""
    if int(m_antennas) != m_antennas or m_antennas < 1:
        raise ValueError(f"m_antennas must be a positive integer, got {m_antennas!r}")
    m = np.arange(1, int(m_antennas) + 1)
    return ChannelMatrix(np.exp(1j * np.pi * np.sin(alpha) * m)[:, None])


def iid_channel(m_antennas, k_users, rng):
    """I.i.d. ``CN(0, 1)`` entries (unit variance per complex entry)."""
    shape = (int(m_antennas), int(k_users))
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return ChannelMatrix(h)


def sample_angle(rng):
    """Angle of arrival, uniform on ``[-pi, pi)``."""
    return float(rng.uniform(-np.pi, np.pi))


def sigma_from_snr(cumulative_snr_db, channel, constellation, gain=1.0):
    """Per-real-component noise variance achieving a cumulative input SNR.

    Cumulative SNR is the received signal power summed over all antennas,
    ``sum_m E|gain * sum_k h_k(m) x_k|^2``, divided by the complex noise
    power ``2 * sigma2`` of one antenna.  Users transmit independent
    zero-mean symbols, so the summed power is
    ``gain**2 * ||H||_F**2 * E|x|^2``.
    """
    h = as_channel_array(channel)
    power = gain ** 2 * float(np.sum(np.abs(h) ** 2)) * constellation.mean_energy()
    if not power > 0:
        raise ValueError("channel (or gain) is zero; SNR is undefined")
    sigma2 = power / 10 ** (cumulative_snr_db / 10) / 2
    return NoiseModel(sigma2)


def sample_noise(noise, m, rng):
    """Circularly symmetric complex Gaussian noise; ``m`` may be an int or a shape."""
    shape = (m,) if np.isscalar(m) else tuple(m)
    return noise.sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
