"""scikit-learn style wrappers around the receivers.

``X`` holds complex frames of shape ``(n, 2, K)`` (pilot then data symbols,
see :attr:`LabeledDataset.X`) or is a :class:`LabeledDataset`; ``y`` holds
the ``(n, 2K)`` transmitted bits. ``predict`` returns hard bits,
``predict_proba`` the soft outputs in (0, 1), and ``score`` is ``1 - BER``.

Neural receivers need channel labels for their estimation stages; pass them
as ``fit(X, y, h=...)`` or use a ``LabeledDataset``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .baseband import OfdmConfig
from .channel import TheoreticalChannelSpec
from .data import LabeledDataset
from .receivers import (ComNet, FcDnn, SwitchNet, build_lmmse, ls_estimate,
                        lmmse_mmse_baseline, ls_zf_baseline)
from .trainer import (OnlineConfig, TrainingConfig, online_train_alpha, online_transfer_learn,
                      train_comnet, train_fcdnn, train_switchnet_offline)
from .validation import as_dataset, check_bits, check_frames


class _ReceiverEstimator(ClassifierMixin, BaseEstimator):
    """Shared predict/score plumbing."""

    def _cfg(self):
        return self.cfg if self.cfg is not None else OfdmConfig()

    def predict(self, X):
        y_p, y_d = check_frames(X, self._cfg())
        return self._predict(y_p, y_d)

    def score(self, X, y, sample_weight=None):
        """Fraction of correctly recovered bits."""
        y_p, _ = check_frames(X, self._cfg())
        y = check_bits(y, len(y_p), self._cfg())
        return 1.0 - float(np.mean(self.predict(X) != y))


class LsZfReceiver(_ReceiverEstimator):
    """LS estimation and zero forcing; ``fit`` only validates."""

    def __init__(self, cfg=None):
        self.cfg = cfg

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def _predict(self, y_p, y_d):
        return ls_zf_baseline(y_p, y_d, self._cfg())

    def estimate_channel(self, X):
        y_p, _ = check_frames(X, self._cfg())
        return ls_estimate(y_p, self._cfg().pilot_symbols)


class LmmseReceiver(_ReceiverEstimator):
    """LMMSE estimation with MMSE detection.

    Parameters
    ----------
    tau_rms : float
        Design RMS delay spread in samples.
    design_snr_db : float
        SNR of the smoothing matrix.
    snr_db : float or None
        Operating SNR assumed by the MMSE detector; ``None`` means ZF.
    """

    def __init__(self, tau_rms=0.5, design_snr_db=25.0, snr_db=25.0, cfg=None):
        self.tau_rms = tau_rms
        self.design_snr_db = design_snr_db
        self.snr_db = snr_db
        self.cfg = cfg

    def fit(self, X=None, y=None):
        cfg = self._cfg()
        spec = TheoreticalChannelSpec(tau_rms=self.tau_rms, fft_size=cfg.fft_size)
        self.lmmse_ = build_lmmse(spec, self.design_snr_db, cfg)
        return self

    def _check(self):
        if not hasattr(self, "lmmse_"):
            raise NotFittedError("call fit() first")

    def _predict(self, y_p, y_d):
        self._check()
        noise = 0.0 if self.snr_db is None else 10.0 ** (-self.snr_db / 10.0)
        return lmmse_mmse_baseline(y_p, y_d, self._cfg(), self.lmmse_, noise)

    def estimate_channel(self, X):
        self._check()
        y_p, _ = check_frames(X, self._cfg())
        return self.lmmse_.apply(ls_estimate(y_p, self._cfg().pilot_symbols))


class _NeuralEstimator(_ReceiverEstimator):
    def _training_config(self):
        return TrainingConfig(epochs=self.epochs, lr=self.lr, batch_frames=self.batch_frames,
                              seed=self.random_state)

    def _check(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("call fit() first")

    def predict_proba(self, X):
        self._check()
        y_p, y_d = check_frames(X, self._cfg())
        return self.net_.soft_bits(y_p, y_d)

    def _predict(self, y_p, y_d):
        self._check()
        return self.net_.receive(y_p, y_d)

    def partial_fit(self, X, y, h=None):
        """One online end-to-end pass over ``X`` at ``online_lr``."""
        self._check()
        ds = as_dataset(X, y, h, cfg=self._cfg())
        n = len(ds)
        batch = self.batch_frames if n % self.batch_frames == 0 else 1
        oc = OnlineConfig(symbols_per_epoch=n, batch_symbols=batch, epochs_per_group=1,
                          collected_symbols=n, transfer_lr=self.online_lr, seed=self.random_state)
        online_transfer_learn(self.net_, ds, oc)
        return self


class FcDnnReceiver(_NeuralEstimator):
    """Fully connected data-driven receiver (8 subnets of 500-250-120-16)."""

    def __init__(self, epochs=300, lr=1e-3, batch_frames=100, online_lr=1e-6,
                 random_state=0, cfg=None):
        self.epochs = epochs
        self.lr = lr
        self.batch_frames = batch_frames
        self.online_lr = online_lr
        self.random_state = random_state
        self.cfg = cfg

    def fit(self, X, y=None, h=None):
        ds = as_dataset(X, y, h, cfg=self._cfg())
        res = train_fcdnn(self._training_config(), ds, FcDnn.build(self._cfg(), rng=self.random_state))
        self.net_, self.loss_curve_ = res.model, res.loss_trace
        return self


class ComNetReceiver(_NeuralEstimator):
    """Model-driven receiver: LMMSE-initialized linear CE plus an SD subnet bank."""

    def __init__(self, sd_mode="nonlinear", tau_rms=0.5, design_snr_db=25.0, epochs=300,
                 ce_epochs=None, lr=1e-3, batch_frames=100, online_lr=1e-6,
                 short_path=False, random_state=0, cfg=None):
        self.sd_mode = sd_mode
        self.tau_rms = tau_rms
        self.design_snr_db = design_snr_db
        self.epochs = epochs
        self.ce_epochs = ce_epochs
        self.lr = lr
        self.batch_frames = batch_frames
        self.online_lr = online_lr
        self.short_path = short_path
        self.random_state = random_state
        self.cfg = cfg

    def _lmmse(self):
        cfg = self._cfg()
        return build_lmmse(TheoreticalChannelSpec(self.tau_rms, fft_size=cfg.fft_size),
                           self.design_snr_db, cfg)

    def fit(self, X, y=None, h=None):
        ds = as_dataset(X, y, h, cfg=self._cfg(), need_channel=True)
        net = ComNet.build(self._lmmse(), self._cfg(), self.sd_mode, rng=self.random_state)
        res = train_comnet(self._training_config(), ds, net=net, ce_epochs=self.ce_epochs)
        self.net_, self.loss_curve_ = res.model, res.loss_trace
        self.net_.short_path = self.short_path
        return self

    def estimate_channel(self, X):
        self._check()
        y_p, _ = check_frames(X, self._cfg())
        return self.net_.estimate_channel(y_p)


class SwitchNetReceiver(_NeuralEstimator):
    """ComNet with two CE refinement nets blended by a trainable ``alpha``.

    ``fit`` expects ``groups``: 0 marks short-channel frames, 1 long-channel
    frames. :meth:`adapt` trains ``alpha`` alone on new labeled frames.
    """

    def __init__(self, sd_mode="nonlinear", tau_rms=0.5, design_snr_db=25.0, epochs=300,
                 ce_epochs=None, lr=1e-3, batch_frames=100, alpha=0.0, alpha_lr=0.006,
                 online_batch=10, online_epochs=2, random_state=0, cfg=None):
        self.sd_mode = sd_mode
        self.tau_rms = tau_rms
        self.design_snr_db = design_snr_db
        self.epochs = epochs
        self.ce_epochs = ce_epochs
        self.lr = lr
        self.batch_frames = batch_frames
        self.alpha = alpha
        self.alpha_lr = alpha_lr
        self.online_batch = online_batch
        self.online_epochs = online_epochs
        self.random_state = random_state
        self.cfg = cfg

    def fit(self, X, y=None, h=None, groups=None):
        cfg = self._cfg()
        ds = as_dataset(X, y, h, groups, cfg=cfg, need_channel=True)
        short = ds.subset(ds.groups == 0)
        long = ds.subset(ds.groups == 1)
        if not len(short) or not len(long):
            raise ValueError("SwitchNet training needs frames from both groups 0 and 1")
        lmmse = build_lmmse(TheoreticalChannelSpec(self.tau_rms, fft_size=cfg.fft_size),
                            self.design_snr_db, cfg)
        net = SwitchNet.build(lmmse, cfg, self.sd_mode, rng=self.random_state)
        mixed = LabeledDataset.concatenate([short, long], channel_tag="mixed")
        res = train_switchnet_offline(self._training_config(), short, long, net=net,
                                      ce_epochs=self.ce_epochs, mixed_source=mixed)
        self.net_, self.loss_curve_ = res.model, res.loss_trace
        self.net_.alpha = np.asarray(float(self.alpha))
        return self

    def adapt(self, X, y, symbols_per_epoch=50):
        """Online ``alpha`` training; returns the ``alpha`` trace."""
        self._check()
        ds = as_dataset(X, y, cfg=self._cfg())
        oc = OnlineConfig(symbols_per_epoch=symbols_per_epoch, batch_symbols=self.online_batch,
                          epochs_per_group=self.online_epochs, alpha_lr=self.alpha_lr,
                          collected_symbols=len(ds), seed=self.random_state)
        self.alpha_trace_ = online_train_alpha(self.net_, ds, oc)
        self.alpha = float(self.net_.alpha)
        return self.alpha_trace_

    def estimate_channel(self, X):
        self._check()
        y_p, _ = check_frames(X, self._cfg())
        return self.net_.estimate_channel(y_p)


def estimated_channel_mse(estimator, X, h):
    """Mean squared error of ``estimator.estimate_channel(X)`` against ``h``."""
    return float(np.mean(np.abs(estimator.estimate_channel(X) - np.asarray(h)) ** 2))
