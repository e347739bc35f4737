"""Command-line entry point ``airx``.

Every subcommand takes ``--config``, ``--seed`` and ``--out``. On failure the
last line on stderr is a JSON object ``{"error": <type>, "message": <text>}``
and the exit code is 2 for configuration/format problems, 1 otherwise.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import experiments as ex
from .channel import TheoreticalChannelSpec, exp_family, sui5_family
from .config import load_config
from .data import FrameSource, write_dataset
from .exceptions import ConfigurationError, FormatError, InvalidInputError
from .receivers import ComNet, FcDnn, SwitchNet, build_lmmse, load_receiver
from .trainer import (online_train_alpha, online_transfer_learn, train_comnet, train_fcdnn,
                      train_switchnet_offline)

logger = logging.getLogger("airx")


def _lmmse_init(cfg, channel, ofdm):
    tau = cfg.lmmse.tau_rms if cfg.lmmse.tau_rms is not None else ex.baseline_tau(channel)
    spec = TheoreticalChannelSpec(tau_rms=tau, fft_size=ofdm.fft_size)
    return build_lmmse(spec, cfg.lmmse.design_snr_db, ofdm)


def _receiver(cfg, ofdm, channel):
    if cfg.receiver in ("ls_zf",):
        return "ls_zf"
    if cfg.receiver == "lmmse":
        return ex.LmmseDetector(_lmmse_init(cfg, channel, ofdm), ofdm)
    if not cfg.checkpoint:
        raise ConfigurationError(f"receiver {cfg.receiver!r} needs a checkpoint")
    return load_receiver(cfg.checkpoint, ofdm)


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_gen_dataset(cfg, args):
    ofdm = cfg.ofdm.build()
    channel = cfg.channel.build()
    ds = FrameSource(ofdm, channel, cfg.dataset.snr_db).generate(cfg.dataset.count, cfg.seed)
    path = cfg.dataset.path or _out(args, "dataset.airx")
    write_dataset(path, ds)
    print(path)


def cmd_train(cfg, args):
    ofdm = cfg.ofdm.build()
    tc = cfg.training.build(cfg.seed)
    channel = cfg.channel.build()
    if cfg.receiver == "fcdnn":
        res = train_fcdnn(tc, FrameSource(ofdm, channel, tc.snr_db), FcDnn.build(ofdm, rng=cfg.seed))
    elif cfg.receiver in ("comnet", "comnet_linear_sd"):
        mode = "linear" if cfg.receiver == "comnet_linear_sd" else "nonlinear"
        net = ComNet.build(_lmmse_init(cfg, channel, ofdm), ofdm, mode, rng=cfg.seed)
        res = train_comnet(tc, FrameSource(ofdm, channel, tc.snr_db), net=net,
                           ce_epochs=cfg.training.ce_epochs)
    elif cfg.receiver == "switchnet":
        short = exp_family()
        net = SwitchNet.build(_lmmse_init(cfg, short, ofdm), ofdm, rng=cfg.seed)
        res = train_switchnet_offline(tc, FrameSource(ofdm, short, tc.snr_db),
                                      FrameSource(ofdm, sui5_family(), tc.snr_db), net=net,
                                      ce_epochs=cfg.training.ce_epochs)
    else:
        raise ConfigurationError(f"receiver {cfg.receiver!r} has nothing to train")
    path = _out(args, f"{cfg.receiver}.airx")
    res.model.save(path)
    ex.write_trace(_out(args, f"{cfg.receiver}_loss.csv"), res.loss_trace, "loss")
    print(path)


def cmd_online(cfg, args):
    ofdm = cfg.ofdm.build()
    oc = cfg.online.build(cfg.seed)
    channel = cfg.channel.build()
    if not cfg.checkpoint:
        raise ConfigurationError("online training needs a checkpoint")
    net = load_receiver(cfg.checkpoint, ofdm)
    pool = ex.online_pool(channel, ofdm, oc.collected_symbols, cfg.online.snr_db, cfg.seed)
    if cfg.online.mode == "alpha":
        if not isinstance(net, SwitchNet):
            raise ConfigurationError("online.mode 'alpha' needs a SwitchNet checkpoint")
        if cfg.online.initial_alpha is not None:
            net.alpha = np.asarray(float(cfg.online.initial_alpha))
        trace = online_train_alpha(net, pool, oc)
        ex.write_trace(_out(args, "alpha_trace.csv"), trace, "alpha")
    else:
        test = FrameSource(ofdm, channel, cfg.online.snr_db).generate(
            max(1, cfg.sweep.min_bits // ofdm.bits_per_frame), cfg.seed + 1)
        rows = online_transfer_learn(net, pool, oc, test_set=test)
        with open(_out(args, "transfer_trace.csv"), "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["epoch", "loss", "ber"])
            writer.writeheader()
            writer.writerows(rows)
    path = _out(args, f"{net.kind}_online.airx")
    net.save(path)
    print(path)


def cmd_eval(cfg, args):
    ofdm = cfg.ofdm.build()
    channel = cfg.channel.build()
    report = ex.run_ber_sweep(_receiver(cfg, ofdm, channel), channel, cfg.sweep.snr_db, ofdm,
                              cfg.sweep.min_bits, cfg.sweep.max_frames, cfg.seed,
                              cfg.sweep.noiseless, cfg.sweep.workers, cfg.config_hash())
    report.receiver = cfg.receiver
    report.write(_out(args, "ber.csv"), _out(args, "ber.json"))
    for row in report.rows():
        print(f"{row['snr_db']:6.1f} dB  ber={row['ber']:.3e}  bits={row['bits']}")


def cmd_mismatch(cfg, args):
    ofdm = cfg.ofdm.build()
    if not cfg.checkpoints:
        raise ConfigurationError("mismatch needs 'checkpoints: {name: path, ...}'")
    nets = {name: load_receiver(path, ofdm) for name, path in cfg.checkpoints.items()}
    res = ex.run_mismatch_experiment(nets, cfg.sweep.snr_db, cfg=ofdm, min_bits=cfg.sweep.min_bits,
                                     seed=cfg.seed, workers=cfg.sweep.workers)
    for label, reports in (("matched", res.matched), ("mismatched", res.mismatched)):
        for name, rep in reports.items():
            rep.config_hash = cfg.config_hash()
            rep.write(_out(args, f"{label}_{name}.csv"), _out(args, f"{label}_{name}.json"))
    with open(_out(args, "flip_summary.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(res.summary[0]))
        writer.writeheader()
        writer.writerows(res.summary)
    for row in res.summary:
        print(f"{row['channel']:<10} {row['snr_db']:5.1f} dB  {row['ordering']}")


def cmd_switch_exp(cfg, args):
    ofdm = cfg.ofdm.build()
    if not cfg.checkpoint:
        raise ConfigurationError("switch-exp needs a SwitchNet checkpoint")
    net = load_receiver(cfg.checkpoint, ofdm)
    res = ex.run_switch_experiment(net, cfg.sweep.snr_db, cfg.online.build(cfg.seed),
                                   train_snr_db=cfg.online.snr_db, min_bits=cfg.sweep.min_bits,
                                   seed=cfg.seed, workers=cfg.sweep.workers)
    for name, trace in res.traces.items():
        safe = name.replace("[", "_").replace("]", "").replace(" ", "_")
        ex.write_trace(_out(args, f"alpha_{safe}.csv"), trace, "alpha")
        for rx, rep in res.reports.get(name, {}).items():
            rep.config_hash = cfg.config_hash()
            rep.write(_out(args, f"ber_{safe}_{rx}.csv"), _out(args, f"ber_{safe}_{rx}.json"))
        print(f"{name:<16} settled alpha = {res.settled_alpha[name]:+.4f}")


def cmd_complexity(cfg, args):
    rows = ex.complexity_report(cfg.ofdm.build())
    ex.write_complexity_csv(_out(args, "complexity.csv"), rows)
    print(ex.format_complexity(rows))


COMMANDS = {
    "gen-dataset": (cmd_gen_dataset, "generate a labeled dataset file"),
    "train": (cmd_train, "offline training of the configured receiver"),
    "online": (cmd_online, "online alpha switching or transfer learning"),
    "eval": (cmd_eval, "Monte-Carlo BER sweep"),
    "mismatch": (cmd_mismatch, "matched versus mismatched channel evaluation"),
    "switch-exp": (cmd_switch_exp, "alpha switching followed by BER sweeps"),
    "complexity": (cmd_complexity, "parameter and FLOP counts"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="airx", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML experiment configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        COMMANDS[args.command][0](cfg, args)
    except (ConfigurationError, FormatError, InvalidInputError, FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure must end in a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
