"""Monte-Carlo BER sweeps and the experiment drivers built on them.

Every SNR point draws its frames from fixed-size chunks with seeds derived
from ``(seed, snr)``, so all receivers evaluated at the same seed see the
same frames, and the integer error counts do not depend on how chunks are
scheduled across workers.
"""

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baseband import OfdmConfig, demap_symbols
from .channel import ChannelMixture, ExpChannel, Sui5Channel, TheoreticalChannelSpec, exp_family
from .data import CHUNK_FRAMES, FrameSource
from .exceptions import ConfigurationError, EvaluationError
from .receivers import (ComNet, FcDnn, NeuralReceiver, SwitchNet, build_lmmse,
                        default_theoretical_spec, hard_decision, lmmse_mmse_baseline,
                        ls_zf_baseline, zf_detect)
from .trainer import OnlineConfig, online_train_alpha
from .validation import check_snr_list

CSV_COLUMNS = ("snr_db", "bits", "errors", "ber", "frames", "seconds")


# -- receivers under test -----------------------------------------------------

def baseline_tau(channel):
    """RMS delay spread assumed by the conventional LMMSE baseline for ``channel``.

    EXP channels use their own ``tau_rms``; SUI-5 profiles use ``n_max / 10``,
    inverting the ten-RMS-spreads rule that sizes the maximum delay.
    """
    if isinstance(channel, ExpChannel):
        return channel.tau_rms
    if isinstance(channel, Sui5Channel):
        return channel.delays[-1] / 10.0
    if isinstance(channel, ChannelMixture):
        return float(sum(w * baseline_tau(m) for w, m in zip(channel.weights, channel.models)))
    return channel.rms_delay_spread()


def baseline_lmmse(channel, cfg=None, design_snr_db=25.0):
    cfg = cfg or OfdmConfig()
    spec = TheoreticalChannelSpec(tau_rms=baseline_tau(channel), fft_size=cfg.fft_size)
    return build_lmmse(spec, design_snr_db, cfg)


class Detector:
    """Maps a batch of labeled frames at a given SNR to hard bits."""

    name = "detector"

    def detect(self, ds, snr_db):
        raise NotImplementedError


@dataclass
class LsZfDetector(Detector):
    cfg: OfdmConfig = field(default_factory=OfdmConfig)
    name: str = "ls_zf"

    def detect(self, ds, snr_db):
        return ls_zf_baseline(ds.y_p, ds.y_d, self.cfg)


@dataclass
class LmmseDetector(Detector):
    """LMMSE estimation plus MMSE detection; the MMSE stage uses the true noise level."""

    lmmse: object
    cfg: OfdmConfig = field(default_factory=OfdmConfig)
    name: str = "lmmse"

    def detect(self, ds, snr_db):
        noise_var = 0.0 if snr_db is None else 10.0 ** (-snr_db / 10.0)
        return lmmse_mmse_baseline(ds.y_p, ds.y_d, self.cfg, self.lmmse, noise_var)


@dataclass
class PerfectCsiDetector(Detector):
    """ZF with the true channel: the per-subcarrier detection lower bound for QPSK."""

    name: str = "perfect_csi"

    def detect(self, ds, snr_db):
        return demap_symbols(zf_detect(ds.y_d, ds.h))


@dataclass
class NeuralDetector(Detector):
    net: NeuralReceiver
    name: str = None

    def __post_init__(self):
        if self.name is None:
            self.name = self.net.kind

    def detect(self, ds, snr_db):
        soft = self.net.soft_bits(ds.y_p, ds.y_d)
        if not np.all(np.isfinite(soft)):
            raise EvaluationError(f"{self.name} produced non-finite soft outputs at {snr_db} dB")
        return hard_decision(soft)


def as_detector(receiver, channel=None, cfg=None):
    """Accept a :class:`Detector`, a neural receiver, or ``"ls_zf"``/``"lmmse"``."""
    if isinstance(receiver, Detector):
        return receiver
    if isinstance(receiver, NeuralReceiver):
        return NeuralDetector(receiver)
    cfg = cfg or OfdmConfig()
    if receiver == "ls_zf":
        return LsZfDetector(cfg)
    if receiver == "lmmse":
        if channel is None:
            return LmmseDetector(build_lmmse(default_theoretical_spec(cfg), 25.0, cfg), cfg)
        return LmmseDetector(baseline_lmmse(channel, cfg), cfg)
    if receiver == "perfect_csi":
        return PerfectCsiDetector()
    raise ConfigurationError(f"unknown receiver {receiver!r}")


# -- reports ------------------------------------------------------------------

@dataclass
class BerPoint:
    snr_db: float
    bits: int
    errors: int
    frames: int
    seconds: float

    @property
    def ber(self):
        return self.errors / self.bits if self.bits else float("nan")


@dataclass
class BerReport:
    receiver: str
    channel: str
    seed: int
    points: list
    config_hash: str = ""

    def ber(self, snr_db):
        for p in self.points:
            if p.snr_db == snr_db:
                return p.ber
        raise KeyError(snr_db)

    @property
    def snr_db(self):
        return [p.snr_db for p in self.points]

    def rows(self):
        return [{"snr_db": p.snr_db, "bits": p.bits, "errors": p.errors, "ber": p.ber,
                 "frames": p.frames, "seconds": round(p.seconds, 6)} for p in self.points]

    def counts(self):
        """``(snr, bits, errors, frames)`` tuples; equal for equal sweeps."""
        return [(p.snr_db, p.bits, p.errors, p.frames) for p in self.points]

    def metadata(self):
        return {"receiver": self.receiver, "channel": self.channel, "seed": self.seed,
                "config_hash": self.config_hash}

    def write(self, csv_path, meta_path=None):
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows())
        if meta_path is not None:
            with open(meta_path, "w") as f:
                json.dump(self.metadata(), f, indent=2, sort_keys=True)


def read_report_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [BerPoint(float(r["snr_db"]), int(r["bits"]), int(r["errors"]),
                     int(r["frames"]), float(r["seconds"])) for r in rows]


# -- sweep --------------------------------------------------------------------

def point_seed(seed, snr_db):
    """Frame seed of one SNR point; independent of the other points in the list."""
    key = int(round(float(snr_db) * 1000))
    return int(np.random.SeedSequence([int(seed), key & 0xFFFFFFFF, 1 if key < 0 else 0])
               .generate_state(1)[0])


def frames_needed(min_bits, max_frames, cfg):
    n = -(-int(min_bits) // cfg.bits_per_frame)
    n = -(-n // CHUNK_FRAMES) * CHUNK_FRAMES
    return n if max_frames is None else min(n, int(max_frames))


def evaluate_point(detector, channel, snr_db, cfg, n_frames, seed, noiseless=False, workers=1):
    """Integer error counts of ``detector`` on ``n_frames`` frames at one SNR."""
    source = FrameSource(cfg, channel, None if noiseless else snr_db)
    pseed = point_seed(seed, snr_db)
    n_chunks = -(-n_frames // CHUNK_FRAMES)
    eff_snr = None if noiseless else snr_db

    def one(i):
        ds = source.chunk(pseed, i)
        take = min(CHUNK_FRAMES, n_frames - i * CHUNK_FRAMES)
        ds = ds.subset(slice(0, take))
        bits = detector.detect(ds, eff_snr)
        return int(np.count_nonzero(bits != ds.bits)), ds.bits.size, take

    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, range(n_chunks)))
    else:
        parts = [one(i) for i in range(n_chunks)]
    errors, bits, frames = (sum(col) for col in zip(*parts)) if parts else (0, 0, 0)
    return BerPoint(float(snr_db), bits, errors, frames, time.perf_counter() - start)


def run_ber_sweep(receiver, channel, snr_list, cfg=None, min_bits=10**6, max_frames=None,
                  seed=0, noiseless=False, workers=1, config_hash=""):
    """BER versus SNR of one receiver on one channel model.

    Parameters
    ----------
    receiver : Detector, NeuralReceiver or str
    channel : ChannelModel
    snr_list : sequence of float
        Strictly increasing, in dB.
    min_bits : int
        Bits per point; frames come in whole chunks so at least this many
        are counted unless ``max_frames`` stops the point first.
    noiseless : bool
        Skip the AWGN (the SNR still sets the MMSE noise assumption to zero).

    Returns
    -------
    BerReport
    """
    cfg = cfg or OfdmConfig()
    snr_list = check_snr_list(snr_list)
    detector = as_detector(receiver, channel, cfg)
    n_frames = frames_needed(min_bits, max_frames, cfg)
    points = [evaluate_point(detector, channel, s, cfg, n_frames, seed, noiseless, workers)
              for s in snr_list]
    return BerReport(detector.name, channel.name, int(seed), points, config_hash)


# -- mismatch -----------------------------------------------------------------

@dataclass
class MismatchResult:
    matched: dict
    mismatched: dict
    summary: list

    def ordering(self, which, snr_db):
        reports = self.matched if which == "matched" else self.mismatched
        return sorted(reports, key=lambda name: reports[name].ber(snr_db))


def _ordering_rows(label, reports, snr_list):
    rows = []
    for s in snr_list:
        order = sorted(reports, key=lambda name: reports[name].ber(s))
        rows.append({"channel": label, "snr_db": s, "ordering": " < ".join(order),
                     **{name: reports[name].ber(s) for name in reports}})
    return rows


def run_mismatch_experiment(networks, snr_list, matched=None, mismatched=None, cfg=None,
                            min_bits=10**5, seed=0, workers=1):
    """Evaluate the same checkpoints on the training channel and on SUI-5.

    Parameters
    ----------
    networks : dict of str -> NeuralReceiver
        Receivers trained on ``matched``.
    matched, mismatched : ChannelModel
        Default to the EXP family and SUI-5 with ``n_max = 10``.

    Returns
    -------
    MismatchResult
        Per-channel reports keyed by receiver name (``lmmse`` included) and
        one summary row per (channel, SNR) with the BER ordering.
    """
    cfg = cfg or OfdmConfig()
    matched = matched or exp_family()
    mismatched = mismatched or Sui5Channel(10)
    out = {}
    for label, channel in (("matched", matched), ("mismatched", mismatched)):
        reports = {"lmmse": run_ber_sweep("lmmse", channel, snr_list, cfg, min_bits,
                                          seed=seed, workers=workers)}
        for name, net in networks.items():
            reports[name] = run_ber_sweep(NeuralDetector(net, name), channel, snr_list, cfg,
                                          min_bits, seed=seed, workers=workers)
        out[label] = reports
    summary = (_ordering_rows("matched", out["matched"], snr_list)
               + _ordering_rows("mismatched", out["mismatched"], snr_list))
    return MismatchResult(out["matched"], out["mismatched"], summary)


# -- switching ----------------------------------------------------------------

SUI_PROFILES = ((0, 4, 10), (0, 4, 8), (0, 5, 12))


def sui_profile(delays):
    delays = tuple(int(d) for d in delays)
    return Sui5Channel(delays[-1], delays)


def profile_name(delays):
    return "sui5[" + " ".join(str(d) for d in delays) + "]"


@dataclass
class SwitchResult:
    traces: dict
    settled_alpha: dict
    reports: dict = field(default_factory=dict)


def online_pool(channel, cfg, count, snr_db, seed):
    """Collected labeled training symbols received over ``channel``."""
    return FrameSource(cfg, channel, snr_db).generate(count, seed)


def run_switch_experiment(net, snr_list=None, online_cfg=None, exp_channel=None,
                          profiles=SUI_PROFILES, train_snr_db=25.0, min_bits=10**5,
                          seed=0, workers=1, on_epoch=None):
    """Online switching of ``alpha`` followed by BER sweeps with the settled value.

    For each target channel the offline network starts with ``alpha`` at the
    other channel's value (0 for EXP, 1 for SUI-5), trains ``alpha`` on
    symbols collected from the target, and is then swept against the LMMSE
    baseline of that channel. ``snr_list=None`` skips the sweeps.
    """
    if not isinstance(net, SwitchNet):
        raise ConfigurationError("run_switch_experiment needs a SwitchNet")
    online_cfg = online_cfg or OnlineConfig()
    exp_channel = exp_channel or exp_family()
    cfg = net.cfg
    targets = [("exp", exp_channel, 1.0)] + [(profile_name(p), sui_profile(p), 0.0) for p in profiles]
    traces, settled, reports = {}, {}, {}
    for i, (name, channel, alpha0) in enumerate(targets):
        model = net.copy()
        model.alpha = np.asarray(alpha0)
        pool = online_pool(channel, cfg, online_cfg.collected_symbols, train_snr_db,
                           seed * 1000 + 17 * (i + 1))
        cb = None if on_epoch is None else (lambda e, snap, _n=name: on_epoch(_n, e, snap))
        traces[name] = online_train_alpha(model, pool, online_cfg, cb)
        settled[name] = traces[name][-1]
        if snr_list is not None:
            reports[name] = {
                "switchnet": run_ber_sweep(NeuralDetector(model, "switchnet"), channel, snr_list,
                                           cfg, min_bits, seed=seed, workers=workers),
                "lmmse": run_ber_sweep("lmmse", channel, snr_list, cfg, min_bits,
                                       seed=seed, workers=workers),
            }
    return SwitchResult(traces, settled, reports)


def write_trace(path, values, column="value"):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", column])
        for epoch, v in enumerate(values):
            writer.writerow([epoch, v])


# -- complexity ---------------------------------------------------------------

@dataclass
class ComplexityRow:
    receiver: str
    params: int
    flops: int


def complexity_report(cfg=None):
    """Parameter and per-frame forward FLOP counts of the three network receivers."""
    cfg = cfg or OfdmConfig()
    lmmse = build_lmmse(default_theoretical_spec(cfg), 25.0, cfg)
    nets = (FcDnn.build(cfg, rng=0), ComNet.build(lmmse, cfg, rng=0), SwitchNet.build(lmmse, cfg, rng=0))
    return [ComplexityRow(n.kind, n.count_params(), n.count_flops()) for n in nets]


def format_complexity(rows):
    lines = [f"{'receiver':<10} {'params':>12} {'FLOPs':>12} {'params (M)':>11} {'FLOPs (M)':>10}"]
    for r in rows:
        lines.append(f"{r.receiver:<10} {r.params:>12,} {r.flops:>12,} "
                     f"{r.params / 1e6:>11.2f} {r.flops / 1e6:>10.2f}")
    return "\n".join(lines)


def write_complexity_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["receiver", "params", "flops"])
        writer.writeheader()
        writer.writerows(asdict(r) for r in rows)
