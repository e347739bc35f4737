"""Input checks shared by the estimator wrappers and the experiment runner."""

import numpy as np

from .data import LabeledDataset
from .exceptions import InvalidInputError


def check_frames(X, cfg):
    """Split estimator input into ``(y_p, y_d)``.

    Parameters
    ----------
    X : LabeledDataset or array-like of complex, shape (n, 2, K)
        Pilot symbols in ``X[:, 0]`` and data symbols in ``X[:, 1]``.
    cfg : OfdmConfig
    """
    if isinstance(X, LabeledDataset):
        return X.y_p, X.y_d
    X = np.asarray(X)
    if X.ndim == 2 and X.shape == (2, cfg.active_count):
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (2, cfg.active_count):
        raise InvalidInputError(
            f"expected frames of shape (n, 2, {cfg.active_count}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("received symbols contain NaN or inf")
    return X[:, 0].astype(complex), X[:, 1].astype(complex)


def check_bits(y, n_frames, cfg):
    """Validate ``(n, 2K)`` bit labels in {0, 1}; returns uint8."""
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[None]
    if y.shape != (n_frames, cfg.bits_per_frame):
        raise InvalidInputError(f"expected bits of shape ({n_frames}, {cfg.bits_per_frame}), got {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("bit labels must be 0 or 1")
    return y.astype(np.uint8)


def check_channel(h, n_frames, cfg):
    h = np.asarray(h)
    if h.shape != (n_frames, cfg.active_count):
        raise InvalidInputError(f"expected channel labels of shape ({n_frames}, {cfg.active_count})")
    return h.astype(complex)


def as_dataset(X, y, h=None, groups=None, cfg=None, need_channel=False):
    """Wrap estimator arguments as a :class:`LabeledDataset`.

    A ``LabeledDataset`` passed as ``X`` is returned unchanged. Without ``h``
    the channel labels are zero placeholders, so ``need_channel`` rejects
    that case for callers that train on them.
    """
    if isinstance(X, LabeledDataset):
        return X
    if need_channel and h is None:
        raise InvalidInputError("channel labels h are required to train the CE stage")
    y_p, y_d = check_frames(X, cfg)
    n = len(y_p)
    bits = check_bits(y, n, cfg)
    h = np.zeros((n, cfg.active_count), complex) if h is None else check_channel(h, n, cfg)
    groups = None if groups is None else np.asarray(groups, dtype=np.int64)
    return LabeledDataset(y_p, y_d, bits, h, np.zeros((n, 1), complex), groups)


def check_snr_list(snrs):
    snrs = [float(s) for s in snrs]
    if not snrs:
        raise InvalidInputError("SNR list is empty")
    if any(b <= a for a, b in zip(snrs, snrs[1:])):
        raise InvalidInputError("SNR list must be strictly increasing")
    return snrs
