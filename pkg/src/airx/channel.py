"""Sample-spaced multipath channel models and AWGN.

Models draw ``(n, L)`` arrays of complex tap gains whose expected total
energy is one; individual realizations keep their fading depth. Noise is
specified per received sample so that, with a unit-energy constellation and
a unitary FFT, the per-subcarrier SNR equals ``1 / noise_var``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def _complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ChannelRealization:
    """Complex taps ``h[0..L-1]`` of one frame's channel."""

    taps: np.ndarray

    @property
    def n_taps(self):
        return len(self.taps)


class ChannelModel:
    """Base class: subclasses provide ``tap_powers`` and may override ``sample``."""

    name = "channel"

    @property
    def max_delay(self):
        return len(self.tap_powers()) - 1

    def tap_powers(self):
        raise NotImplementedError

    def sample(self, n, rng):
        """Draw ``n`` independent Rayleigh realizations, shape ``(n, max_delay+1)``."""
        p = self.tap_powers()
        return _complex_gaussian(rng, (n, len(p))) * np.sqrt(p)

    def realization(self, seed):
        return ChannelRealization(self.sample(1, _as_rng(seed))[0])

    def rms_delay_spread(self):
        p = self.tap_powers()
        d = np.arange(len(p))
        mean = np.sum(p * d)
        return float(np.sqrt(np.sum(p * d**2) - mean**2))


@dataclass(frozen=True)
class ExpChannel(ChannelModel):
    """Exponential power delay profile, one tap per integer delay.

    Tap ``l`` has variance proportional to ``exp(-l / tau_rms)`` for
    ``l = 0..max_delay``.
    """

    tau_rms: float = 0.5
    max_delay: int = 5
    name = "exp"

    def __post_init__(self):
        if self.tau_rms <= 0:
            raise ConfigurationError("tau_rms must be positive")
        if self.max_delay < 1:
            raise ConfigurationError("max_delay must be >= 1")

    def tap_powers(self):
        p = np.exp(-np.arange(self.max_delay + 1) / self.tau_rms)
        return p / p.sum()


@dataclass(frozen=True)
class Sui5Channel(ChannelModel):
    """Three-ray SUI-5 profile at delays ``[0, 0.4*n_max, n_max]``, ``[0, -5, -10]`` dB.

    ``delays`` overrides the derived delays (e.g. ``(0, 4, 8)``).
    """

    n_max: int = 10
    delays: tuple = None
    powers_db: tuple = (0.0, -5.0, -10.0)
    name = "sui5"

    def __post_init__(self):
        if self.delays is None:
            object.__setattr__(
                self, "delays", (0, _round_half_up(0.4 * self.n_max), self.n_max))
        else:
            object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        if len(self.delays) != len(self.powers_db):
            raise ConfigurationError("delays and powers_db differ in length")
        if any(b <= a for a, b in zip(self.delays, self.delays[1:])) or self.delays[0] < 0:
            raise ConfigurationError("SUI-5 delays must be non-negative and strictly increasing")

    def path_powers(self):
        p = 10.0 ** (np.asarray(self.powers_db) / 10.0)
        return p / p.sum()

    def tap_powers(self):
        p = np.zeros(self.delays[-1] + 1)
        p[list(self.delays)] = self.path_powers()
        return p


@dataclass(frozen=True)
class TwoRayChannel(ChannelModel):
    """Two paths at delays 0 and 1 with fixed magnitudes and uniform random phases.

    ``power_ratio`` is ``|h1|^2 / |h0|^2``.
    """

    power_ratio: float = 1.0
    name = "2ray"

    def __post_init__(self):
        if not 0 < self.power_ratio <= 1:
            raise ConfigurationError("power_ratio must lie in (0, 1]")

    def tap_powers(self):
        return np.array([1.0, self.power_ratio]) / (1.0 + self.power_ratio)

    def sample(self, n, rng):
        phases = rng.uniform(0.0, 2 * np.pi, size=(n, 2))
        return np.sqrt(self.tap_powers()) * np.exp(1j * phases)


@dataclass(frozen=True)
class ChannelMixture(ChannelModel):
    """Pick one member model per frame with the given probabilities."""

    models: tuple
    weights: tuple = None
    name = "mixed"

    def __post_init__(self):
        if not self.models:
            raise ConfigurationError("mixture needs at least one model")
        w = np.ones(len(self.models)) if self.weights is None else np.asarray(self.weights, float)
        if len(w) != len(self.models) or np.any(w < 0) or w.sum() <= 0:
            raise ConfigurationError("invalid mixture weights")
        object.__setattr__(self, "weights", tuple(w / w.sum()))

    @property
    def max_delay(self):
        return max(m.max_delay for m in self.models)

    def tap_powers(self):
        p = np.zeros(self.max_delay + 1)
        for w, m in zip(self.weights, self.models):
            q = m.tap_powers()
            p[: len(q)] += w * q
        return p

    def sample(self, n, rng):
        return self.sample_labeled(n, rng)[0]

    def sample_labeled(self, n, rng):
        """Taps plus the index of the member that generated each frame."""
        which = rng.choice(len(self.models), size=n, p=self.weights)
        taps = np.zeros((n, self.max_delay + 1), dtype=complex)
        for i, m in enumerate(self.models):
            sel = np.flatnonzero(which == i)
            if len(sel):
                t = m.sample(len(sel), rng)
                taps[sel, : t.shape[1]] = t
        return taps, which


def exp_family(tau_values=(0.3, 0.4, 0.5, 0.6, 0.7)):
    """EXP channels over a range of RMS delay spreads, max delay ``round(10*tau)``."""
    return ChannelMixture(tuple(
        ExpChannel(t, _round_half_up(10 * t)) for t in tau_values))


def sui5_family(n_max_values=range(8, 15)):
    """SUI-5 channels over a range of maximum delays."""
    return ChannelMixture(tuple(Sui5Channel(int(n)) for n in n_max_values))


# -- functional forms ---------------------------------------------------------

def sample_exp_channel(spec, rng_seed):
    return spec.realization(rng_seed)


def sample_sui5_channel(spec, rng_seed, cp_len=16):
    if spec.delays[-1] >= cp_len:
        raise ConfigurationError(
            f"SUI-5 n_max {spec.delays[-1]} must be shorter than cp_len {cp_len}")
    return spec.realization(rng_seed)


def sample_2ray_channel(power_ratio, rng_seed):
    return TwoRayChannel(power_ratio).realization(rng_seed)


def channel_frequency_response(taps, cfg):
    """N-point DFT of the zero-padded taps at the active bins.

    ``taps`` may be a :class:`ChannelRealization` or an ``(..., L)`` array.
    """
    if isinstance(taps, ChannelRealization):
        taps = taps.taps
    taps = np.asarray(taps)
    if taps.shape[-1] > cfg.fft_size:
        raise ConfigurationError("more taps than FFT points")
    return np.fft.fft(taps, n=cfg.fft_size, axis=-1)[..., list(cfg.active_indices)]


@dataclass(frozen=True)
class NoiseSpec:
    """AWGN level; ``noise_var`` is the complex variance per sample."""

    snr_db: float

    @property
    def noise_var(self):
        return 10.0 ** (-self.snr_db / 10.0)


def convolve_taps(signals, taps):
    """Linear convolution truncated to the input length, aligned to the first path.

    ``signals`` is ``(n, ..., S)`` and ``taps`` is ``(n, L)``; every symbol of a
    frame sees the same taps.
    """
    signals = np.asarray(signals)
    taps = np.asarray(taps)
    out = np.zeros(signals.shape, dtype=complex)
    extra = (1,) * (signals.ndim - 2)
    for lag in range(taps.shape[-1]):
        h = taps[:, lag].reshape((-1,) + extra + (1,))
        if lag == 0:
            out += h * signals
        else:
            out[..., lag:] += h * signals[..., :-lag]
    return out


def apply_channel(signals, taps, noise, rng_seed):
    """Convolve each symbol with its frame's taps and add AWGN.

    Parameters
    ----------
    signals : ndarray, shape (n, n_symbols, S) or (S,)
        Time-domain symbols with CP.
    taps : ndarray, shape (n, L) or ChannelRealization
    noise : NoiseSpec or None
        ``None`` disables noise.
    rng_seed : int or numpy.random.Generator
    """
    if isinstance(taps, ChannelRealization):
        taps = taps.taps
    signals = np.asarray(signals)
    taps = np.asarray(taps)
    squeeze = signals.ndim == 1
    if squeeze:
        signals = signals[None, None, :]
        taps = taps.reshape(1, -1)
    out = convolve_taps(signals, taps)
    if noise is not None:
        rng = _as_rng(rng_seed)
        out = out + np.sqrt(noise.noise_var) * _complex_gaussian(rng, out.shape)
    return out[0, 0] if squeeze else out


@dataclass(frozen=True)
class TheoreticalChannelSpec:
    """Exponential-PDP correlation model used to design LMMSE weights.

    ``tau_mu`` defaults to ``tau_rms`` so that ``tau_0 = 0``.
    """

    tau_rms: float = 0.5
    tau_mu: float = None
    fft_size: int = 128

    def __post_init__(self):
        if self.tau_mu is None:
            object.__setattr__(self, "tau_mu", self.tau_rms)
        if self.tau_0 < 0:
            raise ConfigurationError("tau_mu must be >= tau_rms")

    @property
    def tau_0(self):
        return self.tau_mu - self.tau_rms


def theoretical_autocorrelation(spec, k):
    """Normalized frequency correlation ``R_f(k) / R_f(0)`` at subcarrier lag ``k``."""
    k = np.asarray(k, dtype=float)
    n = spec.fft_size
    if np.any(np.abs(k) >= n):
        raise ConfigurationError("lag must satisfy |k| < N")
    return np.exp(-2j * np.pi * spec.tau_0 * k / n) / (1 + 2j * np.pi * spec.tau_rms * k / n)
