"""Offline and online training of the neural receivers.

Offline pipelines:

* FC-DNN, end to end on soft-bit MSE.
* ComNet, two stages: CE layer on channel MSE, then the SD bank on bit MSE
  with the CE frozen.
* SwitchNet, three stages: ``(W1, B1)`` on the short channel with
  ``alpha = 0``; ``(W2, B2)`` on the long channel with ``alpha = 1`` and
  ``(W1, B1)`` frozen; finally the shared SD bank on a mixture of both with
  ``alpha`` set per frame to its generating channel.

Online loops consume labeled symbols in groups, train ``n`` epochs per group
and publish a parameter snapshot after every epoch.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import nnkit
from .baseband import to_complex_vector, to_real_vector
from .data import CHUNK_FRAMES, FrameSource, LabeledDataset
from .exceptions import ConfigurationError, TrainingDivergedError
from .nnkit import Adam
from .receivers import ComNet, FcDnn, SwitchNet, hard_decision, ls_estimate, zf_detect

logger = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    """Offline schedule. ``frames_per_epoch`` is ignored for fixed datasets."""

    snr_db: float = 25.0
    epochs: int = 2000
    lr: float = 1e-3
    frames_per_epoch: int = 1000
    batch_frames: int = 100
    seed: int = 0
    loss: str = "mse"
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 0 or self.frames_per_epoch <= 0 or self.batch_frames <= 0:
            raise ConfigurationError("epoch and batch sizes must be positive")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.loss != "mse" or self.optimizer != "adam":
            raise ConfigurationError("only loss='mse' with optimizer='adam' is implemented")


@dataclass
class OnlineConfig:
    """Online schedule: groups of ``symbols_per_epoch`` symbols, ``epochs_per_group`` passes each."""

    symbols_per_epoch: int = 50
    batch_symbols: int = 10
    epochs_per_group: int = 2
    alpha_lr: float = 0.006
    collected_symbols: int = 5000
    transfer_lr: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.symbols_per_epoch <= 0 or self.batch_symbols <= 0:
            raise ConfigurationError("symbol counts must be positive")
        if self.symbols_per_epoch % self.batch_symbols:
            raise ConfigurationError("batch_symbols must divide symbols_per_epoch")
        if self.epochs_per_group < 1:
            raise ConfigurationError("epochs_per_group must be >= 1")


@dataclass
class TrainingResult:
    model: object
    loss_trace: list
    stage_traces: dict = None


# -- shared loop --------------------------------------------------------------

def _epoch_data(source, cfg, epoch):
    if isinstance(source, LabeledDataset):
        return source
    chunks = -(-cfg.frames_per_epoch // CHUNK_FRAMES)
    return source.generate(cfg.frames_per_epoch, cfg.seed, first_chunk=epoch * chunks)


def _check_finite(loss, where):
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss} during {where}")


def _run_epochs(cfg, source, step, where, select=None, epochs=None):
    """Shuffle, batch and call ``step(batch) -> loss``; return per-epoch mean losses."""
    rng = np.random.default_rng([cfg.seed, 7919])
    trace = []
    for epoch in range(cfg.epochs if epochs is None else epochs):
        data = _epoch_data(source, cfg, epoch)
        if select is not None:
            data = data.subset(select(data))
        if len(data) == 0:
            raise ConfigurationError(f"no training frames available for {where}")
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(data), cfg.batch_frames):
            loss = step(data.subset(order[start:start + cfg.batch_frames]))
            _check_finite(loss, f"{where}, epoch {epoch}")
            losses.append(loss)
        trace.append(float(np.mean(losses)))
        if epoch % 50 == 0:
            logger.info("%s epoch %d loss %.3e", where, epoch, trace[-1])
    return trace


def _as_source(data_source, cfg, model_cfg, channel=None):
    if isinstance(data_source, (LabeledDataset, FrameSource)):
        return data_source
    if channel is not None:
        return FrameSource(model_cfg, channel, cfg.snr_db)
    raise ConfigurationError("data_source must be a LabeledDataset or FrameSource")


# -- FC-DNN -------------------------------------------------------------------

def fcdnn_step(net, opt):
    def step(batch):
        soft, _, cache = net.forward(batch.y_p, batch.y_d)
        loss = nnkit.mse_loss(soft, batch.bits)
        grads = net.backward(cache, nnkit.mse_grad(soft, batch.bits))
        net.set_params(opt.step(net.params(), grads))
        return loss
    return step


def train_fcdnn(cfg, data_source, net=None):
    """End-to-end soft-bit MSE training of an FC-DNN receiver."""
    if net is None:
        model_cfg = data_source.cfg if isinstance(data_source, FrameSource) else None
        net = FcDnn.build(model_cfg, rng=cfg.seed)
    opt = Adam(cfg.lr)
    trace = _run_epochs(cfg, data_source, fcdnn_step(net, opt), "fcdnn")
    return TrainingResult(net, trace)


# -- ComNet -------------------------------------------------------------------

def ce_features(net, y_p):
    return to_real_vector(ls_estimate(y_p, net.cfg.pilot_symbols))


def ce_loss(net, batch):
    """Channel-label MSE of the refined estimate (Loss1)."""
    z, _ = net.refine(ce_features(net, batch.y_p))
    return nnkit.mse_loss(z, to_real_vector(batch.h))


def _ce_layer_step(layer, opt, features, targets):
    def step(batch):
        x = features(batch)
        z, cache = nnkit.forward([layer], x)
        t = targets(batch, x)
        loss = nnkit.mse_loss(z, t)
        grads, _ = nnkit.backward([layer], cache, nnkit.mse_grad(z, t))
        layer.weight, layer.bias = opt.step([layer.weight, layer.bias], list(grads[0]))
        return loss
    return step


def _sd_step(bank, opt, alpha_of=None, ce=None):
    """Train the SD bank on ZF features computed through a frozen CE."""
    def step(batch):
        if alpha_of is None:
            z = ce(batch, None)
        else:
            z = ce(batch, alpha_of(batch))
        x_zf = zf_detect(batch.y_d, to_complex_vector(z))
        soft, cache = bank.forward(to_real_vector(x_zf))
        loss = nnkit.mse_loss(soft, batch.bits)
        grads, _ = bank.backward(cache, nnkit.mse_grad(soft, batch.bits))
        nnkit.apply_update(bank.layers, opt.step(nnkit.layer_params(bank.layers),
                                                 nnkit.layer_grads(bank.layers, grads)))
        return loss
    return step


def train_comnet(cfg, data_source, lmmse=None, net=None, sd_mode="nonlinear", ce_epochs=None):
    """Two-stage ComNet training with separate optimizers per stage.

    Parameters
    ----------
    cfg : TrainingConfig
    data_source : LabeledDataset or FrameSource
        Must carry channel labels.
    lmmse : LmmseInit, optional
        CE initialization when ``net`` is not given.
    ce_epochs : int, optional
        Stage-1 epochs; defaults to ``cfg.epochs``.
    """
    if net is None:
        if lmmse is None:
            raise ConfigurationError("train_comnet needs an LMMSE init or a network")
        model_cfg = data_source.cfg if isinstance(data_source, FrameSource) else None
        net = ComNet.build(lmmse, model_cfg, sd_mode=sd_mode, rng=cfg.seed)

    net.ce.trainable = True
    net.sd.set_trainable(False)
    opt1 = Adam(cfg.lr)
    trace1 = _run_epochs(
        cfg, data_source,
        _ce_layer_step(net.ce, opt1, lambda b: ce_features(net, b.y_p),
                       lambda b, x: to_real_vector(b.h)),
        "comnet CE", epochs=ce_epochs)

    net.ce.trainable = False
    net.sd.set_trainable(True)
    opt2 = Adam(cfg.lr)
    ce_frozen = [net.ce.weight, net.ce.bias]

    def ce(batch, _):
        return ce_features(net, batch.y_p) @ ce_frozen[0].T + ce_frozen[1]

    trace2 = _run_epochs(cfg, data_source, _sd_step(net.sd, opt2, ce=ce), "comnet SD")
    return TrainingResult(net, trace1 + trace2, {"ce": trace1, "sd": trace2})


# -- SwitchNet ----------------------------------------------------------------

def fit_compensator(ce1, features, targets, ridge=1e-6):
    """Least-squares ``(W2, B2)`` such that ``z + W2 z + B2`` matches ``targets``.

    ``z = W1 x + B1`` is the frozen first-stage output. Used to initialize the
    compensating layer before gradient refinement.
    """
    z = features @ ce1.weight.T + ce1.bias
    za = np.hstack([z, np.ones((len(z), 1))])
    resid = targets - z
    gram = za.T @ za
    gram += ridge * np.trace(gram) / len(gram) * np.eye(len(gram))
    coef = np.linalg.solve(gram, za.T @ resid)
    return nnkit.Dense(coef[:-1].T.copy(), coef[-1].copy(), "none")


def train_switchnet_offline(cfg, exp_source, sui5_source, lmmse=None, net=None,
                            sd_mode="nonlinear", ce_epochs=None, init_frames=8192,
                            mixed_source=None):
    """Three-stage offline SwitchNet training.

    Parameters
    ----------
    exp_source, sui5_source : LabeledDataset or FrameSource
        Short- and long-channel training data.
    mixed_source : LabeledDataset or FrameSource, optional
        Stage-C data whose ``groups`` are 0 for short and 1 for long channel
        frames. Defaults to alternating epochs drawn from the two sources.
    init_frames : int
        Long-channel frames for the least-squares initialization of
        ``(W2, B2)``; 0 keeps the zero init.
    """
    if net is None:
        if lmmse is None:
            raise ConfigurationError("train_switchnet_offline needs an LMMSE init or a network")
        model_cfg = exp_source.cfg if isinstance(exp_source, FrameSource) else None
        net = SwitchNet.build(lmmse, model_cfg, sd_mode=sd_mode, rng=cfg.seed)
    feats = lambda b: ce_features(net, b.y_p)  # noqa: E731

    # stage A: W1, B1 on the short channel, alpha = 0
    net.alpha = np.asarray(0.0)
    net.sd.set_trainable(False)
    net.ce2.trainable = False
    net.ce1.trainable = True
    trace_a = _run_epochs(
        cfg, exp_source,
        _ce_layer_step(net.ce1, Adam(cfg.lr), feats, lambda b, x: to_real_vector(b.h)),
        "switchnet CE1", epochs=ce_epochs)
    net.ce1.trainable = False

    # stage B: W2, B2 on the long channel, alpha = 1, (W1, B1) frozen
    net.alpha = np.asarray(1.0)
    w1 = net.ce1
    if init_frames:
        if isinstance(sui5_source, FrameSource):
            init = sui5_source.generate(init_frames, cfg.seed + 1_000_003)
        else:
            init = sui5_source
        fitted = fit_compensator(w1, feats(init), to_real_vector(init.h))
        net.ce2.weight, net.ce2.bias = fitted.weight, fitted.bias
    net.ce2.trainable = True

    def z1(batch):
        return feats(batch) @ w1.weight.T + w1.bias

    trace_b = _run_epochs(
        cfg, sui5_source,
        _ce_layer_step(net.ce2, Adam(cfg.lr), z1, lambda b, x: to_real_vector(b.h) - x),
        "switchnet CE2", epochs=ce_epochs)
    net.ce2.trainable = False

    # stage C: shared SD on both channels, alpha fixed per frame
    net.sd.set_trainable(True)
    ce1_w, ce1_b = net.ce1.weight, net.ce1.bias
    ce2_w, ce2_b = net.ce2.weight, net.ce2.bias

    def ce(batch, alpha):
        z = feats(batch) @ ce1_w.T + ce1_b
        return z + alpha[:, None] * (z @ ce2_w.T + ce2_b)

    alpha_of = lambda b: b.groups.astype(float)  # noqa: E731
    mixed = mixed_source if mixed_source is not None else _Alternating(exp_source, sui5_source)
    trace_c = _run_epochs(cfg, mixed, _sd_step(net.sd, Adam(cfg.lr), alpha_of, ce), "switchnet SD")
    net.sd.set_trainable(False)
    net.alpha = np.asarray(0.0)
    return TrainingResult(net, trace_a + trace_b + trace_c,
                          {"ce1": trace_a, "ce2": trace_b, "sd": trace_c})


class _Alternating:
    """Half of every epoch from each source, tagged 0 (short) and 1 (long)."""

    def __init__(self, short, long):
        self.short = short
        self.long = long

    def generate(self, count, seed, first_chunk=0):
        half = count // 2
        parts = []
        for tag, src, n, salt in ((0, self.short, half, 0), (1, self.long, count - half, 1)):
            if isinstance(src, LabeledDataset):
                part = src.subset(slice(0, n)) if n < len(src) else src
            else:
                part = src.generate(n, seed + 104_729 * (salt + 1), first_chunk)
            part = part.subset(slice(None))
            part.groups = np.full(len(part), tag, dtype=np.int64)
            parts.append(part)
        return LabeledDataset.concatenate(parts, channel_tag="mixed")


# -- online -------------------------------------------------------------------

def _groups(stream, size, limit):
    """Yield consecutive ``size``-frame groups, stopping after ``limit`` frames."""
    if isinstance(stream, LabeledDataset):
        stream = [stream]
    buf = []
    held = 0
    used = 0
    for part in stream:
        buf.append(part)
        held += len(part)
        while held >= size and used + size <= limit:
            cat = LabeledDataset.concatenate(buf) if len(buf) > 1 else buf[0]
            yield cat.subset(slice(0, size))
            rest = cat.subset(slice(size, None))
            buf = [rest] if len(rest) else []
            held = len(rest)
            used += size
        if used + size > limit:
            return


def online_train_alpha(net, stream, cfg=None, on_epoch=None):
    """Train only ``alpha`` of a SwitchNet from labeled online symbols.

    Parameters
    ----------
    net : SwitchNet
        Modified in place; every other tensor stays frozen.
    stream : LabeledDataset or iterable of LabeledDataset
        Training symbols in arrival order. Training pauses (returns) when
        fewer than ``symbols_per_epoch`` new symbols are available.
    on_epoch : callable, optional
        Called as ``on_epoch(epoch, snapshot)`` with an independent copy.

    Returns
    -------
    list of float
        ``alpha`` before training followed by its value after every epoch.
    """
    cfg = cfg or OnlineConfig()
    for layer in net.layers:
        layer.trainable = False
    net.alpha_trainable = True
    opt = Adam(cfg.alpha_lr)
    rng = np.random.default_rng([cfg.seed, 31])
    trace = [float(net.alpha)]
    epoch = 0
    for group in _groups(stream, cfg.symbols_per_epoch, cfg.collected_symbols):
        for _ in range(cfg.epochs_per_group):
            order = rng.permutation(len(group))
            for start in range(0, len(group), cfg.batch_symbols):
                batch = group.subset(order[start:start + cfg.batch_symbols])
                soft, _, cache = net.forward(batch.y_p, batch.y_d)
                _check_finite(nnkit.mse_loss(soft, batch.bits), "online alpha training")
                grads = net.backward(cache, nnkit.mse_grad(soft, batch.bits))
                (net.alpha,) = opt.step([net.alpha], [grads[4]])
            epoch += 1
            trace.append(float(net.alpha))
            if on_epoch is not None:
                on_epoch(epoch, net.copy())
    net.alpha_trainable = False
    return trace


def bit_error_rate(net, dataset):
    return float(np.mean(net.receive(dataset.y_p, dataset.y_d) != dataset.bits))


def online_transfer_learn(net, stream, cfg=None, test_set=None, lr=None, on_epoch=None):
    """End-to-end refinement of all parameters of a ComNet or FC-DNN.

    Returns
    -------
    list of dict
        ``{"epoch", "loss", "ber"}`` rows; row 0 is the untouched network.
        ``ber`` is measured on ``test_set`` when given, else NaN.
    """
    cfg = cfg or OnlineConfig()
    lr = cfg.transfer_lr if lr is None else lr
    if isinstance(net, SwitchNet):
        raise ConfigurationError("use online_train_alpha for SwitchNet")
    for layer in net.layers:
        layer.trainable = True
    opt = Adam(lr) if lr > 0 else None
    rng = np.random.default_rng([cfg.seed, 37])

    def ber():
        return bit_error_rate(net, test_set) if test_set is not None else float("nan")

    trace = [{"epoch": 0, "loss": float("nan"), "ber": ber()}]
    epoch = 0
    for group in _groups(stream, cfg.symbols_per_epoch, cfg.collected_symbols):
        for _ in range(cfg.epochs_per_group):
            order = rng.permutation(len(group))
            losses = []
            for start in range(0, len(group), cfg.batch_symbols):
                batch = group.subset(order[start:start + cfg.batch_symbols])
                soft, _, cache = net.forward(batch.y_p, batch.y_d)
                loss = nnkit.mse_loss(soft, batch.bits)
                _check_finite(loss, "online transfer learning")
                losses.append(loss)
                if opt is not None:
                    grads = net.backward(cache, nnkit.mse_grad(soft, batch.bits))
                    net.set_params(opt.step(net.params(), grads))
            epoch += 1
            trace.append({"epoch": epoch, "loss": float(np.mean(losses)), "ber": ber()})
            if on_epoch is not None:
                on_epoch(epoch, net.copy())
    return trace


def soft_and_hard(net, dataset):
    soft = net.soft_bits(dataset.y_p, dataset.y_d)
    return soft, hard_decision(soft)
