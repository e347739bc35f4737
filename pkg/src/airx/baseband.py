"""OFDM transmit/receive signal processing.

Gray-coded 4-QAM mapping, subcarrier placement, IFFT/FFT with cyclic prefix
and the real/complex reshaping used to feed dense networks. Every function
broadcasts over leading batch axes: the last axis is always the subcarrier
(or sample) axis.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, InvalidInputError

_SQRT_HALF = 1.0 / np.sqrt(2.0)

# index = 2*b0 + b1 ; b0 selects the sign of the real part, b1 the imaginary
QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) * _SQRT_HALF


def default_active_indices(fft_size=128, active_count=64):
    """Symmetric band around DC: ``1..K/2`` and ``N-K/2..N-1``."""
    half = active_count // 2
    return tuple(range(1, half + 1)) + tuple(range(fft_size - half, fft_size))


@dataclass(frozen=True)
class OfdmConfig:
    """Static parameters of the OFDM link.

    Parameters
    ----------
    fft_size : int
        Number of points N of the (I)FFT.
    active_count : int
        Number K of loaded subcarriers.
    cp_len : int
        Cyclic prefix length P in samples.
    mod_order : int
        QAM order; only 4 is supported.
    pilot_seed : int
        Seed of the pseudo-random QPSK pilot sequence.
    active_indices : tuple of int, optional
        Loaded FFT bins. Defaults to a symmetric band around a null DC bin.
    """

    fft_size: int = 128
    active_count: int = 64
    cp_len: int = 16
    mod_order: int = 4
    pilot_seed: int = 2020
    active_indices: tuple = None
    pilot_symbols: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.active_indices is None:
            object.__setattr__(
                self, "active_indices",
                default_active_indices(self.fft_size, self.active_count))
        else:
            object.__setattr__(self, "active_indices",
                               tuple(int(i) for i in self.active_indices))
        idx = self.active_indices
        if self.fft_size <= 0 or self.active_count <= 0 or self.cp_len <= 0:
            raise ConfigurationError("fft_size, active_count and cp_len must be positive")
        if self.active_count > self.fft_size:
            raise ConfigurationError("active_count exceeds fft_size")
        if len(idx) != self.active_count or len(set(idx)) != len(idx):
            raise ConfigurationError("active_indices must hold active_count distinct bins")
        if min(idx) < 0 or max(idx) >= self.fft_size:
            raise ConfigurationError("active_indices out of [0, fft_size)")
        if 0 in idx:
            raise ConfigurationError("DC bin 0 must stay unloaded")
        if self.mod_order != 4:
            raise ConfigurationError("only 4-QAM (mod_order=4) is supported")
        rng = np.random.default_rng(self.pilot_seed)
        pilot_bits = rng.integers(0, 2, size=2 * self.active_count, dtype=np.uint8)
        pilots = map_bits(pilot_bits, self)
        pilots.setflags(write=False)
        object.__setattr__(self, "pilot_symbols", pilots)

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.mod_order))

    @property
    def bits_per_frame(self):
        """Payload bits carried by the data symbol of one frame."""
        return self.active_count * self.bits_per_symbol

    @property
    def symbol_len(self):
        return self.fft_size + self.cp_len

    def check_max_delay(self, max_delay):
        """Raise unless a channel of ``max_delay`` samples fits in the CP."""
        if max_delay >= self.cp_len:
            raise ConfigurationError(
                f"channel max delay {max_delay} must be shorter than cp_len {self.cp_len}")


def map_bits(bits, cfg):
    """Map bits to Gray-coded unit-energy 4-QAM symbols.

    Bit pairs ``(b0, b1)`` go to ``((-1)**b0 + 1j*(-1)**b1) / sqrt(2)``.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] != cfg.bits_per_frame:
        raise InvalidInputError(
            f"expected {cfg.bits_per_frame} bits per symbol, got {bits.shape[-1]}")
    b = bits.reshape(bits.shape[:-1] + (cfg.active_count, 2)).astype(np.intp)
    return QPSK_POINTS[2 * b[..., 0] + b[..., 1]]


def demap_symbols(symbols, cfg=None):
    """Minimum-distance hard decision, inverse of :func:`map_bits`."""
    symbols = np.asarray(symbols)
    out = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],), dtype=np.uint8)
    out[..., 0::2] = symbols.real < 0
    out[..., 1::2] = symbols.imag < 0
    return out


def random_bits(rng, n_frames, cfg):
    return rng.integers(0, 2, size=(n_frames, cfg.bits_per_frame), dtype=np.uint8)


def ofdm_modulate(symbols, cfg):
    """Place symbols on the active bins, unitary IFFT and prepend the CP."""
    symbols = np.asarray(symbols)
    if symbols.shape[-1] != cfg.active_count:
        raise InvalidInputError(
            f"expected {cfg.active_count} symbols, got {symbols.shape[-1]}")
    grid = np.zeros(symbols.shape[:-1] + (cfg.fft_size,), dtype=complex)
    grid[..., cfg.active_indices] = symbols
    body = np.fft.ifft(grid, norm="ortho")
    return np.concatenate([body[..., -cfg.cp_len:], body], axis=-1)


def ofdm_demodulate(signal, cfg):
    """Drop the CP, unitary FFT and pick the active bins."""
    signal = np.asarray(signal)
    if signal.shape[-1] != cfg.symbol_len:
        raise InvalidInputError(
            f"expected {cfg.symbol_len} samples, got {signal.shape[-1]}")
    spectrum = np.fft.fft(signal[..., cfg.cp_len:], norm="ortho")
    return spectrum[..., list(cfg.active_indices)]


def to_real_vector(v):
    """Stack ``[Re(v), Im(v)]`` along the last axis."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1)


def to_complex_vector(r):
    """Inverse of :func:`to_real_vector`."""
    r = np.asarray(r, dtype=float)
    m = r.shape[-1]
    if m % 2:
        raise InvalidInputError("real vector must have even length")
    return r[..., : m // 2] + 1j * r[..., m // 2:]


def complex_to_real_matrix(w):
    """Real 2m x 2m matrix acting on stacked vectors like ``w`` acts on complex ones."""
    w = np.asarray(w)
    return np.block([[w.real, -w.imag], [w.imag, w.real]])


@dataclass
class Frame:
    """One pilot OFDM symbol followed by one data OFDM symbol."""

    pilot_signal: np.ndarray
    data_signal: np.ndarray
    truth_bits: np.ndarray
    truth_channel: object = None


def build_frame(bits, cfg, channel=None):
    return Frame(
        pilot_signal=ofdm_modulate(cfg.pilot_symbols, cfg),
        data_signal=ofdm_modulate(map_bits(bits, cfg), cfg),
        truth_bits=np.asarray(bits, dtype=np.uint8),
        truth_channel=channel,
    )
