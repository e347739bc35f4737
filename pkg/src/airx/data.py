"""Labeled frame generation and the binary dataset file format.

Frames are generated in fixed-size chunks, each from its own seed derived
from ``(seed, chunk_index)``. The result therefore does not depend on how
many frames are requested at once or on which worker produced a chunk.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .baseband import OfdmConfig, map_bits, ofdm_demodulate, ofdm_modulate, random_bits
from .channel import ChannelMixture, NoiseSpec, apply_channel, channel_frequency_response
from .exceptions import FormatError, InvalidInputError

CHUNK_FRAMES = 256

CHANNEL_TAGS = ("exp", "sui5", "2ray", "mixed", "other")


@dataclass
class LabeledDataset:
    """Received frames with bit and channel labels.

    Attributes
    ----------
    y_p, y_d : ndarray, shape (n, K)
        Post-FFT received pilot and data symbols.
    bits : ndarray of uint8, shape (n, 2K)
    h : ndarray, shape (n, K)
        True channel frequency response on the active subcarriers.
    taps : ndarray, shape (n, L)
    groups : ndarray of int, shape (n,)
        Member index of the generating model when it was a mixture, else 0.
    channel_tag : str
    """

    y_p: np.ndarray
    y_d: np.ndarray
    bits: np.ndarray
    h: np.ndarray
    taps: np.ndarray
    groups: np.ndarray = None
    channel_tag: str = "other"
    snr_db: float = float("nan")

    def __post_init__(self):
        n = len(self.y_p)
        if self.groups is None:
            self.groups = np.zeros(n, dtype=np.int64)
        for name in ("y_d", "bits", "h", "taps", "groups"):
            if len(getattr(self, name)) != n:
                raise InvalidInputError(f"{name} has {len(getattr(self, name))} rows, expected {n}")

    def __len__(self):
        return len(self.y_p)

    @property
    def X(self):
        """Estimator input: complex ``(n, 2, K)`` with pilot then data symbols."""
        return np.stack([self.y_p, self.y_d], axis=1)

    def subset(self, index):
        return LabeledDataset(self.y_p[index], self.y_d[index], self.bits[index],
                              self.h[index], self.taps[index], self.groups[index],
                              self.channel_tag, self.snr_db)

    @classmethod
    def concatenate(cls, parts, channel_tag=None):
        parts = list(parts)
        width = max(p.taps.shape[1] for p in parts)
        taps = np.concatenate([np.pad(p.taps, ((0, 0), (0, width - p.taps.shape[1])))
                               for p in parts])
        tags = {p.channel_tag for p in parts}
        tag = channel_tag or (tags.pop() if len(tags) == 1 else "mixed")
        snrs = {p.snr_db for p in parts}
        return cls(*(np.concatenate([getattr(p, k) for p in parts])
                     for k in ("y_p", "y_d", "bits", "h")),
                   taps, np.concatenate([p.groups for p in parts]), tag,
                   snrs.pop() if len(snrs) == 1 else float("nan"))

    def equals(self, other):
        """Bit-exact equality of all arrays and metadata."""
        same_snr = (self.snr_db == other.snr_db) or (np.isnan(self.snr_db) and np.isnan(other.snr_db))
        return (self.channel_tag == other.channel_tag and same_snr and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("y_p", "y_d", "bits", "h", "taps", "groups")))


def _channel_tag(model):
    if isinstance(model, ChannelMixture):
        names = {m.name for m in model.models}
        if len(names) == 1:
            return _channel_tag(model.models[0])
    return model.name if model.name in CHANNEL_TAGS else "other"


@dataclass
class FrameSource:
    """Deterministic generator of labeled frames.

    Parameters
    ----------
    cfg : OfdmConfig
    channel : ChannelModel
    snr_db : float or None
        ``None`` means noiseless.
    """

    cfg: OfdmConfig = field(default_factory=OfdmConfig)
    channel: object = None
    snr_db: float = 25.0

    def __post_init__(self):
        if self.channel is None:
            raise InvalidInputError("FrameSource needs a channel model")
        self.cfg.check_max_delay(self.channel.max_delay)

    def chunk(self, seed, index):
        rng = np.random.default_rng([int(seed), int(index)])
        cfg = self.cfg
        n = CHUNK_FRAMES
        bits = random_bits(rng, n, cfg)
        if isinstance(self.channel, ChannelMixture):
            taps, groups = self.channel.sample_labeled(n, rng)
        else:
            taps, groups = self.channel.sample(n, rng), np.zeros(n, dtype=np.int64)
        pilot = np.broadcast_to(ofdm_modulate(cfg.pilot_symbols, cfg), (n, cfg.symbol_len))
        data = ofdm_modulate(map_bits(bits, cfg), cfg)
        tx = np.stack([pilot, data], axis=1)
        noise = None if self.snr_db is None else NoiseSpec(self.snr_db)
        rx = ofdm_demodulate(apply_channel(tx, taps, noise, rng), cfg)
        snr = float("nan") if self.snr_db is None else float(self.snr_db)
        return LabeledDataset(rx[:, 0], rx[:, 1], bits,
                              channel_frequency_response(taps, cfg), taps,
                              np.asarray(groups, dtype=np.int64),
                              _channel_tag(self.channel), snr)

    def generate(self, count, seed, first_chunk=0):
        """``count`` frames from chunks ``first_chunk, first_chunk+1, ...``."""
        if count < 0:
            raise InvalidInputError("count must be non-negative")
        if count == 0:
            return self._empty()
        n_chunks = -(-count // CHUNK_FRAMES)
        parts = [self.chunk(seed, first_chunk + i) for i in range(n_chunks)]
        return LabeledDataset.concatenate(parts).subset(slice(0, count))

    def _empty(self):
        k = self.cfg.active_count
        return LabeledDataset(np.zeros((0, k), complex), np.zeros((0, k), complex),
                              np.zeros((0, 2 * k), np.uint8), np.zeros((0, k), complex),
                              np.zeros((0, self.channel.max_delay + 1), complex),
                              np.zeros(0, np.int64), _channel_tag(self.channel),
                              float("nan") if self.snr_db is None else float(self.snr_db))


def generate_dataset(cfg, channel, noise, count, seed):
    """``count`` labeled frames, fresh channel per frame, deterministic in ``seed``."""
    snr = None if noise is None else noise.snr_db
    return FrameSource(cfg, channel, snr).generate(count, seed)


# -- file format --------------------------------------------------------------
# b"AIRX" | record type b"D" | u32 version | u32 K | u32 L | u32 n | u8 tag | f64 snr
# then per frame: pilot K*c128, data K*c128, bits 2K*u8, h K*c128, taps L*c128, i64 group
# complex values are stored as interleaved little-endian f64 (I, Q)

DATASET_RECORD = b"D"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4scIIIIBd")


def _frame_size(k, n_taps):
    return 16 * k * 3 + 2 * k + 16 * n_taps + 8


def write_dataset(path, ds):
    k = ds.y_p.shape[1]
    n_taps = ds.taps.shape[1]
    tag = CHANNEL_TAGS.index(ds.channel_tag) if ds.channel_tag in CHANNEL_TAGS else len(CHANNEL_TAGS) - 1
    c = "<c16"
    with open(path, "wb") as f:
        f.write(_HEADER.pack(b"AIRX", DATASET_RECORD, DATASET_VERSION, k, n_taps,
                             len(ds), tag, ds.snr_db))
        for i in range(len(ds)):
            f.write(ds.y_p[i].astype(c).tobytes())
            f.write(ds.y_d[i].astype(c).tobytes())
            f.write(ds.bits[i].astype(np.uint8).tobytes())
            f.write(ds.h[i].astype(c).tobytes())
            f.write(ds.taps[i].astype(c).tobytes())
            f.write(struct.pack("<q", int(ds.groups[i])))


def read_dataset(path):
    """Read a dataset file; raises :class:`FormatError` without partial results."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", len(data))
    magic, record, version, k, n_taps, n, tag, snr = _HEADER.unpack_from(data, 0)
    if magic != b"AIRX":
        raise FormatError("bad magic", 0)
    if record != DATASET_RECORD:
        raise FormatError(f"unexpected record type {record!r}", 4)
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}", 5)
    if tag >= len(CHANNEL_TAGS):
        raise FormatError(f"unknown channel tag {tag}", 21)
    size = _frame_size(k, n_taps)
    expected = _HEADER.size + n * size
    if len(data) < expected:
        offset = _HEADER.size + (len(data) - _HEADER.size) // size * size
        raise FormatError("truncated frame record", offset)
    if len(data) > expected:
        raise FormatError("trailing bytes after last frame", expected)
    dt = np.dtype([("y_p", "<c16", (k,)), ("y_d", "<c16", (k,)), ("bits", "u1", (2 * k,)),
                   ("h", "<c16", (k,)), ("taps", "<c16", (n_taps,)), ("group", "<i8")])
    assert dt.itemsize == size
    rec = np.frombuffer(data, dtype=dt, count=n, offset=_HEADER.size)
    return LabeledDataset(rec["y_p"].astype(complex).reshape(n, k),
                          rec["y_d"].astype(complex).reshape(n, k),
                          rec["bits"].astype(np.uint8).reshape(n, 2 * k),
                          rec["h"].astype(complex).reshape(n, k),
                          rec["taps"].astype(complex).reshape(n, n_taps),
                          rec["group"].astype(np.int64), CHANNEL_TAGS[tag], snr)


def dataset_io(path, mode, dataset=None):
    """``mode='w'`` writes ``dataset`` and returns it, ``mode='r'`` reads."""
    if mode == "w":
        write_dataset(path, dataset)
        return dataset
    if mode == "r":
        return read_dataset(path)
    raise InvalidInputError("mode must be 'r' or 'w'")
