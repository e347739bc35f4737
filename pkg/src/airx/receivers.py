"""Receiver algorithms: received pilot + data symbols in, bits out.

Classical chains (LS, LMMSE, ZF, MMSE) are plain functions. The neural
receivers are small classes holding :class:`~airx.nnkit.Dense` layers with
explicit forward/backward passes so that the trainer can differentiate
through the model-driven parts (LS division, ZF equalization).

All functions take batches: ``y_p`` and ``y_d`` are ``(n, K)`` complex
arrays of post-FFT symbols on the active subcarriers.
"""

from dataclasses import dataclass

import numpy as np

from . import nnkit
from .baseband import (OfdmConfig, complex_to_real_matrix, demap_symbols,
                       to_complex_vector, to_real_vector)
from .channel import TheoreticalChannelSpec, theoretical_autocorrelation
from .exceptions import ConfigurationError, InvalidInputError
from .nnkit import Dense

ZF_GUARD = 1e-12
SD_MODES = ("nonlinear", "linear")


def hard_decision(soft):
    """Bit is 1 iff the soft output is at least 0.5."""
    return (np.asarray(soft) >= 0.5).astype(np.uint8)


# -- classical blocks ---------------------------------------------------------

def ls_estimate(y_p, x_p):
    """Element-wise least-squares channel estimate ``y_p / x_p``."""
    return np.asarray(y_p) / np.asarray(x_p)


def zf_detect(y_d, h_hat):
    """Element-wise zero forcing; subcarriers with ``|h_hat| < 1e-12`` output 0."""
    y_d = np.asarray(y_d, dtype=complex)
    h_hat = np.asarray(h_hat, dtype=complex)
    ok = np.abs(h_hat) >= ZF_GUARD
    out = np.zeros(np.broadcast(y_d, h_hat).shape, dtype=complex)
    np.divide(y_d, h_hat, out=out, where=ok)
    return out


def zf_backward(y_d, h_hat, x_zf, grad_x):
    """Gradient w.r.t. ``h_hat`` given the gradient w.r.t. ``x_zf``.

    Gradients of real losses are packed as ``dL/dRe + 1j*dL/dIm``; for the
    holomorphic map ``x = y/h`` this gives ``conj(-x/h) * grad_x``.
    """
    ok = np.abs(h_hat) >= ZF_GUARD
    deriv = np.zeros_like(x_zf)
    np.divide(-x_zf, h_hat, out=deriv, where=ok)
    return np.conj(deriv) * grad_x


def mmse_detect(y_d, h_hat, noise_var):
    h_hat = np.asarray(h_hat)
    return np.conj(h_hat) * y_d / (np.abs(h_hat) ** 2 + noise_var)


def signed_frequencies(cfg):
    """Active bins as signed frequencies: bins at or above N/2 map to ``bin - N``."""
    a = np.asarray(cfg.active_indices)
    return np.where(a >= cfg.fft_size // 2, a - cfg.fft_size, a)


def subcarrier_lags(cfg):
    """Signed frequency distance ``f_i - f_j`` between active subcarriers.

    Measuring in signed frequency (rather than raw bin index or a wrapped
    cyclic distance) keeps the correlation matrix Hermitian and PSD.
    """
    f = signed_frequencies(cfg)
    return f[:, None] - f[None, :]


@dataclass
class LmmseInit:
    """LMMSE smoothing matrix in complex and stacked-real form."""

    weight: np.ndarray
    weight_real: np.ndarray
    snr_design: float

    def apply(self, h_ls):
        return np.asarray(h_ls) @ self.weight.T


def channel_correlation(spec, cfg):
    """Correlation matrix of the active-subcarrier response under ``spec``."""
    return theoretical_autocorrelation(spec, subcarrier_lags(cfg))


def build_lmmse(spec, snr_db, cfg, beta=1.0):
    """``W = R (R + beta/snr I)^-1`` with ``R`` from the exponential-PDP model.

    Parameters
    ----------
    spec : TheoreticalChannelSpec
    snr_db : float
        Design SNR; ``np.inf`` gives the identity.
    cfg : OfdmConfig
    beta : float
        Constellation factor, 1 for QPSK.
    """
    if spec.fft_size != cfg.fft_size:
        raise ConfigurationError("correlation model and OFDM config use different N")
    r = channel_correlation(spec, cfg)
    k = cfg.active_count
    if np.isinf(snr_db):
        w = np.eye(k, dtype=complex)
    else:
        reg = beta * 10.0 ** (-snr_db / 10.0)
        # W = R (R + reg I)^-1  <=>  (R + reg I)^H W^H = R^H
        w = np.linalg.solve((r + reg * np.eye(k)).conj().T, r.conj().T).conj().T
    return LmmseInit(w, complex_to_real_matrix(w), float(snr_db))


def lmmse_estimate(y_p, x_p, lmmse):
    return lmmse.apply(ls_estimate(y_p, x_p))


def lmmse_mmse_baseline(y_p, y_d, cfg, lmmse, noise_var):
    """LMMSE channel estimation followed by per-subcarrier MMSE and hard demapping."""
    h_hat = lmmse_estimate(y_p, cfg.pilot_symbols, lmmse)
    return demap_symbols(mmse_detect(y_d, h_hat, noise_var))


def ls_zf_baseline(y_p, y_d, cfg):
    h_hat = ls_estimate(y_p, cfg.pilot_symbols)
    return demap_symbols(zf_detect(y_d, h_hat))


# -- neural blocks ------------------------------------------------------------

class SubnetBank:
    """Parallel MLPs that all read the same input; subnet ``j`` owns output block ``j``.

    Parameters
    ----------
    subnets : list of list of Dense
    """

    def __init__(self, subnets):
        self.subnets = [list(s) for s in subnets]
        widths = {s[0].in_dim for s in self.subnets}
        if len(widths) != 1:
            raise InvalidInputError("all subnets must share the input width")

    @classmethod
    def build(cls, in_dim, hidden, out_dim=16, n_subnets=8,
              hidden_activation="relu", rng=None):
        rng = np.random.default_rng(rng)
        dims = [in_dim, *hidden, out_dim]
        subnets = []
        for _ in range(n_subnets):
            layers = [Dense.init(a, b, hidden_activation, rng) for a, b in zip(dims[:-1], dims[1:])]
            layers[-1].activation = "sigmoid"
            subnets.append(layers)
        return cls(subnets)

    @property
    def layers(self):
        return [layer for s in self.subnets for layer in s]

    @property
    def in_dim(self):
        return self.subnets[0][0].in_dim

    @property
    def out_dim(self):
        return sum(s[-1].out_dim for s in self.subnets)

    def forward(self, x):
        outs, caches = [], []
        for s in self.subnets:
            o, c = nnkit.forward(s, x)
            outs.append(o)
            caches.append(c)
        return np.concatenate(outs, axis=-1), caches

    def backward(self, caches, grad_output, need_input_grad=False):
        grads, g_in = [], None
        start = 0
        for s, c in zip(self.subnets, caches):
            width = s[-1].out_dim
            g, gi = nnkit.backward(s, c, grad_output[..., start:start + width], need_input_grad)
            start += width
            grads.extend(g)
            if gi is not None:
                g_in = gi if g_in is None else g_in + gi
        return grads, g_in

    def set_trainable(self, flag):
        for layer in self.layers:
            layer.trainable = flag

    def copy(self):
        return SubnetBank([[layer.copy() for layer in s] for s in self.subnets])


class NeuralReceiver:
    """Common surface of the three network receivers."""

    kind = None
    cfg: OfdmConfig

    @property
    def layers(self):
        """Dense layers in checkpoint order."""
        raise NotImplementedError

    @property
    def architecture_layers(self):
        """Dense layers counted in complexity reports."""
        return self.layers

    def soft_bits(self, y_p, y_d):
        return self.forward(y_p, y_d)[0]

    def receive(self, y_p, y_d):
        return hard_decision(self.soft_bits(y_p, y_d))

    def count_params(self):
        return nnkit.count_params(self.architecture_layers)

    def count_flops(self):
        return nnkit.count_flops(self.architecture_layers)

    def trainable_params(self):
        return [p for layer in self.layers if layer.trainable for p in (layer.weight, layer.bias)]

    def save(self, path):
        nnkit.save_params(path, self.layers)


class FcDnn(NeuralReceiver):
    """Data-driven receiver: ``[Re yP, Im yP, Re yD, Im yD]`` -> 8 x (500-250-120-16)."""

    kind = "fcdnn"

    def __init__(self, bank, cfg=None):
        self.cfg = cfg or OfdmConfig()
        self.bank = bank
        if bank.in_dim != 4 * self.cfg.active_count or bank.out_dim != self.cfg.bits_per_frame:
            raise ConfigurationError("FC-DNN bank does not match the OFDM configuration")

    @classmethod
    def build(cls, cfg=None, hidden=(500, 250, 120), n_subnets=8, rng=None):
        cfg = cfg or OfdmConfig()
        out = cfg.bits_per_frame // n_subnets
        return cls(SubnetBank.build(4 * cfg.active_count, hidden, out, n_subnets, "relu", rng), cfg)

    @property
    def layers(self):
        return self.bank.layers

    @staticmethod
    def features(y_p, y_d):
        return np.concatenate([to_real_vector(y_p), to_real_vector(y_d)], axis=-1)

    def forward(self, y_p, y_d):
        soft, cache = self.bank.forward(self.features(y_p, y_d))
        return soft, None, cache

    def backward(self, cache, grad_soft):
        """Flat gradients aligned with :meth:`params`."""
        grads, _ = self.bank.backward(cache, grad_soft)
        return nnkit.layer_grads(self.layers, grads)

    def params(self):
        return nnkit.layer_params(self.layers)

    def set_params(self, new):
        nnkit.apply_update(self.layers, new)

    def copy(self):
        return FcDnn(self.bank.copy(), self.cfg)


class _ModelDriven(NeuralReceiver):
    """Shared LS -> CE refine -> ZF -> SD refine path of ComNet and SwitchNet."""

    sd: SubnetBank
    short_path = False

    def refine(self, r):
        raise NotImplementedError

    def refine_backward(self, cache, grad):
        raise NotImplementedError

    def estimate_channel(self, y_p):
        """Refined complex channel estimate on the active subcarriers."""
        r = to_real_vector(ls_estimate(y_p, self.cfg.pilot_symbols))
        return to_complex_vector(self.refine(r)[0])

    def forward(self, y_p, y_d):
        y_d = np.asarray(y_d)
        r = to_real_vector(ls_estimate(y_p, self.cfg.pilot_symbols))
        z, ce_cache = self.refine(r)
        h_hat = to_complex_vector(z)
        x_zf = zf_detect(y_d, h_hat)
        if self.short_path:
            soft = demap_symbols(x_zf).astype(float)
            sd_cache = None
        else:
            soft, sd_cache = self.sd.forward(to_real_vector(x_zf))
        cache = (y_d, h_hat, x_zf, ce_cache, sd_cache)
        return soft, h_hat, cache

    def backward(self, cache, grad_soft):
        """Flat gradients aligned with :meth:`params` (``None`` where frozen)."""
        y_d, h_hat, x_zf, ce_cache, sd_cache = cache
        need_ce = any(layer.trainable for layer in self.ce_layers) or self._alpha_trainable()
        sd_grads, g_s = self.sd.backward(sd_cache, grad_soft, need_input_grad=need_ce)
        ce_grads = [None] * self._n_ce_params()
        if need_ce:
            g_x = to_complex_vector(g_s)
            g_h = zf_backward(y_d, h_hat, x_zf, g_x)
            ce_grads = self.refine_backward(ce_cache, to_real_vector(g_h))
        return ce_grads + nnkit.layer_grads(self.sd.layers, sd_grads)

    def _alpha_trainable(self):
        return False

    @property
    def ce_layers(self):
        raise NotImplementedError


class ComNet(_ModelDriven):
    """Model-driven receiver with a single linear CE refinement layer.

    Parameters
    ----------
    ce : Dense
        ``2K -> 2K`` linear layer applied to the stacked LS estimate.
    sd : SubnetBank
        ``2K -> 120 -> 16`` subnets on the stacked ZF output.
    short_path : bool
        Replace the SD subnets by plain hard demapping of the ZF output.
    """

    kind = "comnet"

    def __init__(self, ce, sd, cfg=None, short_path=False):
        self.cfg = cfg or OfdmConfig()
        self.ce = ce
        self.sd = sd
        self.short_path = short_path
        k2 = 2 * self.cfg.active_count
        if ce.in_dim != k2 or ce.out_dim != k2 or ce.activation != "none":
            raise ConfigurationError("CE layer must be a linear 2K x 2K map")
        if sd.in_dim != k2 or sd.out_dim != self.cfg.bits_per_frame:
            raise ConfigurationError("SD bank does not match the OFDM configuration")

    @classmethod
    def build(cls, lmmse, cfg=None, sd_mode="nonlinear", hidden=120, n_subnets=8, rng=None):
        """CE initialized to the real LMMSE matrix (zero bias), SD randomly."""
        cfg = cfg or OfdmConfig()
        if sd_mode not in SD_MODES:
            raise ConfigurationError(f"sd_mode must be one of {SD_MODES}")
        k2 = 2 * cfg.active_count
        ce = Dense(lmmse.weight_real.copy(), np.zeros(k2), "none")
        act = "relu" if sd_mode == "nonlinear" else "none"
        sd = SubnetBank.build(k2, (hidden,), cfg.bits_per_frame // n_subnets, n_subnets, act, rng)
        return cls(ce, sd, cfg)

    @property
    def sd_mode(self):
        return "linear" if self.sd.subnets[0][0].activation == "none" else "nonlinear"

    @property
    def layers(self):
        return [self.ce, *self.sd.layers]

    @property
    def ce_layers(self):
        return [self.ce]

    def _n_ce_params(self):
        return 2

    def refine(self, r):
        return nnkit.forward([self.ce], r)

    def refine_backward(self, cache, grad):
        g, _ = nnkit.backward([self.ce], cache, grad)
        return [None, None] if g[0] is None else list(g[0])

    def params(self):
        return [self.ce.weight, self.ce.bias, *nnkit.layer_params(self.sd.layers)]

    def set_params(self, new):
        self.ce.weight, self.ce.bias = new[0], new[1]
        nnkit.apply_update(self.sd.layers, new[2:])

    def copy(self):
        return ComNet(self.ce.copy(), self.sd.copy(), self.cfg, self.short_path)


class SwitchNet(_ModelDriven):
    """ComNet whose CE is ``(alpha W2 + I)(W1 h + B1) + alpha B2``.

    ``alpha`` is a 0-d float array so the optimizer can treat it like any
    other tensor.
    """

    kind = "switchnet"

    def __init__(self, ce1, ce2, alpha, sd, cfg=None, short_path=False):
        self.cfg = cfg or OfdmConfig()
        self.ce1 = ce1
        self.ce2 = ce2
        self.alpha = np.asarray(alpha, dtype=np.float64).reshape(())
        self.alpha_trainable = False
        self.sd = sd
        self.short_path = short_path
        k2 = 2 * self.cfg.active_count
        for ce in (ce1, ce2):
            if ce.in_dim != k2 or ce.out_dim != k2 or ce.activation != "none":
                raise ConfigurationError("CE layers must be linear 2K x 2K maps")
        if sd.in_dim != k2 or sd.out_dim != self.cfg.bits_per_frame:
            raise ConfigurationError("SD bank does not match the OFDM configuration")

    @classmethod
    def build(cls, lmmse, cfg=None, sd_mode="nonlinear", hidden=120, n_subnets=8, rng=None):
        """Both CE nets start from the LMMSE init (``W2 = 0``), alpha = 0."""
        com = ComNet.build(lmmse, cfg, sd_mode, hidden, n_subnets, rng)
        k2 = 2 * com.cfg.active_count
        ce2 = Dense(np.zeros((k2, k2)), np.zeros(k2), "none")
        return cls(com.ce, ce2, 0.0, com.sd, com.cfg)

    @classmethod
    def from_comnet(cls, comnet, ce2=None, alpha=0.0):
        k2 = 2 * comnet.cfg.active_count
        ce2 = ce2 or Dense(np.zeros((k2, k2)), np.zeros(k2), "none")
        return cls(comnet.ce, ce2, alpha, comnet.sd, comnet.cfg, comnet.short_path)

    @property
    def layers(self):
        alpha_layer = Dense(self.alpha.reshape(1, 1), np.zeros(1), "none")
        return [self.ce1, self.ce2, alpha_layer, *self.sd.layers]

    @property
    def architecture_layers(self):
        return [self.ce1, self.ce2, *self.sd.layers]

    @property
    def ce_layers(self):
        return [self.ce1, self.ce2]

    def _alpha_trainable(self):
        return self.alpha_trainable

    def _n_ce_params(self):
        return 5

    def refine(self, r):
        z1, c1 = nnkit.forward([self.ce1], r)
        u, c2 = nnkit.forward([self.ce2], z1)
        return z1 + self.alpha * u, (c1, c2, u)

    def refine_backward(self, cache, grad):
        c1, c2, u = cache
        g_alpha = np.asarray(np.sum(grad * u)) if self.alpha_trainable else None
        need_z1 = self.ce1.trainable
        g2, g_z1 = nnkit.backward([self.ce2], c2, self.alpha * grad, need_input_grad=need_z1)
        out = [None, None]
        if self.ce1.trainable:
            g1, _ = nnkit.backward([self.ce1], c1, grad + g_z1)
            out = list(g1[0])
        out += [None, None] if g2[0] is None else list(g2[0])
        out.append(g_alpha)
        return out

    def params(self):
        return [self.ce1.weight, self.ce1.bias, self.ce2.weight, self.ce2.bias,
                self.alpha, *nnkit.layer_params(self.sd.layers)]

    def set_params(self, new):
        self.ce1.weight, self.ce1.bias, self.ce2.weight, self.ce2.bias = new[:4]
        self.alpha = np.asarray(new[4], dtype=np.float64).reshape(())
        nnkit.apply_update(self.sd.layers, new[5:])

    def comnet_view(self):
        """ComNet sharing ``(W1, B1)`` and the SD bank (the ``alpha = 0`` path)."""
        return ComNet(self.ce1, self.sd, self.cfg, self.short_path)

    def copy(self):
        out = SwitchNet(self.ce1.copy(), self.ce2.copy(), self.alpha.copy(),
                        self.sd.copy(), self.cfg, self.short_path)
        out.alpha_trainable = self.alpha_trainable
        return out


# -- functional entry points --------------------------------------------------

def fcdnn_receive(y_p, y_d, params):
    if params is None:
        raise ConfigurationError("FC-DNN parameters are missing")
    return params.receive(y_p, y_d)


def comnet_receive(y_p, y_d, params, sd_mode=None):
    """Bits and refined channel estimate. ``sd_mode`` must match the trained bank."""
    if params is None:
        raise ConfigurationError("ComNet parameters are missing")
    if sd_mode is not None and sd_mode != params.sd_mode:
        raise ConfigurationError(f"network was built with sd_mode={params.sd_mode!r}")
    soft, h_hat, _ = params.forward(y_p, y_d)
    return hard_decision(soft), h_hat


def switchnet_receive(y_p, y_d, params):
    if params is None:
        raise ConfigurationError("SwitchNet parameters are missing")
    soft, h_hat, _ = params.forward(y_p, y_d)
    return hard_decision(soft), h_hat


def build_receiver_from_layers(layers, cfg=None):
    """Rebuild a network receiver from a flat checkpoint layer list."""
    cfg = cfg or OfdmConfig()
    k2 = 2 * cfg.active_count
    if not layers:
        raise ConfigurationError("empty checkpoint")
    if layers[0].in_dim == 2 * k2:
        per = len(layers) // 8
        return FcDnn(SubnetBank([layers[i * per:(i + 1) * per] for i in range(8)]), cfg)
    if len(layers) > 2 and layers[1].in_dim == k2 and layers[1].out_dim == k2:
        alpha = layers[2].weight[0, 0]
        rest = layers[3:]
        return SwitchNet(layers[0], layers[1], alpha, _bank(rest), cfg)
    return ComNet(layers[0], _bank(layers[1:]), cfg)


def _bank(layers, n_subnets=8):
    per = len(layers) // n_subnets
    if per * n_subnets != len(layers):
        raise ConfigurationError("SD layers do not split into equal subnets")
    return SubnetBank([layers[i * per:(i + 1) * per] for i in range(n_subnets)])


def load_receiver(path, cfg=None):
    return build_receiver_from_layers(nnkit.load_params(path), cfg)


def default_theoretical_spec(cfg=None, tau_rms=0.5):
    cfg = cfg or OfdmConfig()
    return TheoreticalChannelSpec(tau_rms=tau_rms, fft_size=cfg.fft_size)
