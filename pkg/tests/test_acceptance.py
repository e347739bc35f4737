"""Acceptance gate: one test per criterion, each logging a PASS/FAIL summary line.

Trained checkpoints come from the cached ``checkpoint`` fixture, so the first
run trains FC-DNN, ComNet and SwitchNet and later runs reuse them.
"""

import time

import numpy as np
import pytest

from airx.baseband import OfdmConfig, map_bits
from airx.channel import ExpChannel, Sui5Channel, TheoreticalChannelSpec, exp_family
from airx.data import FrameSource, read_dataset, write_dataset
from airx.experiments import (PerfectCsiDetector, baseline_lmmse, complexity_report,
                              online_pool, run_ber_sweep, run_switch_experiment)
from airx.receivers import (ComNet, SwitchNet, build_lmmse, lmmse_estimate, ls_estimate)
from airx.trainer import OnlineConfig, bit_error_rate, online_transfer_learn

from test_receivers import flat_fd_check, randomize

MILLION = 10**6


def record(log, number, ok, detail):
    log.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def ofdm():
    return OfdmConfig()


@pytest.fixture(scope="module")
def matched_nets(checkpoint):
    return {"comnet": checkpoint("comnet"), "fcdnn": checkpoint("fcdnn")}


def test_criterion_1_complexity(acceptance_log):
    rows = {r.receiver: r for r in complexity_report()}
    params = {k: rows[k].params for k in ("fcdnn", "comnet", "switchnet")}
    flops = {k: rows[k].flops for k in params}
    table = {"fcdnn": 4.33e6, "comnet": 0.31e6, "switchnet": 0.34e6}
    ok_params = params == {"fcdnn": 2286448, "comnet": 155840, "switchnet": 172352}
    ok_sig = all(round(params[k] / 1e6, 2) == v
                 for k, v in {"fcdnn": 2.29, "comnet": 0.16, "switchnet": 0.17}.items())
    ok_diff = params["switchnet"] - params["comnet"] == 16512
    ok_flops = all(abs(flops[k] - table[k]) <= 0.15 * table[k] for k in table)
    ok = ok_params and ok_sig and ok_diff and ok_flops
    record(acceptance_log, 1, ok, f"params {params}; FLOPs {flops}")
    assert ok


@pytest.mark.slow
def test_criterion_2_matched_ordering(acceptance_log, matched_nets, ofdm):
    start = time.perf_counter()
    channel = exp_family()
    ber = {name: run_ber_sweep(net, channel, [40.0], ofdm, MILLION, seed=11).ber(40.0)
           for name, net in matched_nets.items()}
    ber["lmmse"] = run_ber_sweep("lmmse", channel, [40.0], ofdm, MILLION, seed=11).ber(40.0)
    genie = run_ber_sweep(PerfectCsiDetector(), channel, [40.0], ofdm, MILLION, seed=11).ber(40.0)
    ok = ber["comnet"] <= ber["fcdnn"] <= ber["lmmse"] and ber["comnet"] <= ber["lmmse"] / 5
    record(acceptance_log, 2, ok,
           f"EXP 40 dB: comnet {ber['comnet']:.3e}, fcdnn {ber['fcdnn']:.3e}, "
           f"lmmse {ber['lmmse']:.3e} (perfect-CSI ZF floor {genie:.3e}; "
           f"eval {time.perf_counter() - start:.0f} s)")
    assert ber["comnet"] <= ber["fcdnn"] <= ber["lmmse"]
    assert ber["comnet"] <= ber["lmmse"] / 5


@pytest.mark.slow
def test_criterion_3_mismatch_flip(acceptance_log, matched_nets, ofdm):
    channel = Sui5Channel(10)
    snrs = [25.0, 30.0, 35.0, 40.0]
    reports = {name: run_ber_sweep(net, channel, snrs, ofdm, 10**5, seed=12)
               for name, net in matched_nets.items()}
    reports["lmmse"] = run_ber_sweep("lmmse", channel, snrs, ofdm, 10**5, seed=12)
    flips = {s: reports["lmmse"].ber(s) < reports["fcdnn"].ber(s) < reports["comnet"].ber(s)
             for s in snrs[1:]}
    saturation = reports["comnet"].ber(40.0) / reports["comnet"].ber(25.0)
    ok = all(flips.values()) and saturation > 0.5
    detail = "; ".join(f"{s:.0f} dB lmmse {reports['lmmse'].ber(s):.2e} fcdnn "
                       f"{reports['fcdnn'].ber(s):.2e} comnet {reports['comnet'].ber(s):.2e}"
                       for s in snrs[1:])
    record(acceptance_log, 3, ok, f"SUI-5(10): {detail}; comnet BER(40)/BER(25) = {saturation:.2f}")
    assert all(flips.values())
    assert saturation > 0.5


def _alpha_verdict(trace, limit):
    trace = np.asarray(trace)
    if limit == 0.0:
        reached = bool(np.any(np.abs(trace[1:11]) < 0.1))
    else:
        reached = bool(np.any(trace[1:11] > 0.9))
    steady = bool(np.all(np.abs(trace[10:] - limit) <= 0.2))
    return reached, steady


@pytest.mark.slow
def test_criterion_4_alpha_switching(acceptance_log, checkpoint):
    start = time.perf_counter()
    res = run_switch_experiment(checkpoint("switchnet"), None, OnlineConfig(alpha_lr=0.006),
                                profiles=((0, 4, 10),))
    elapsed = time.perf_counter() - start
    verdicts = {name: _alpha_verdict(trace, 0.0 if name == "exp" else 1.0)
                for name, trace in res.traces.items()}
    ok = all(r and s for r, s in verdicts.values()) and elapsed < 60
    detail = "; ".join(f"->{name}: alpha after 10 epochs {res.traces[name][10]:+.3f}, "
                       f"final {res.traces[name][-1]:+.3f}, reached {r}, steady {s}"
                       for name, (r, s) in verdicts.items())
    record(acceptance_log, 4, ok, f"{detail}; {elapsed:.0f} s")
    assert all(r for r, _ in verdicts.values()), "alpha did not reach its limit within 10 epochs"
    assert all(s for _, s in verdicts.values()), "alpha left the +-0.2 band after epoch 10"
    assert elapsed < 60


@pytest.mark.slow
def test_criterion_5_switchnet_ber(acceptance_log, checkpoint):
    snrs = [15.0, 20.0, 25.0, 30.0, 35.0, 40.0]
    res = run_switch_experiment(checkpoint("switchnet"), snrs, OnlineConfig(), min_bits=10**5,
                                seed=13)
    exp = res.reports["exp"]
    sui = res.reports["sui5[0 4 10]"]
    exp_wins = {s: exp["switchnet"].ber(s) < exp["lmmse"].ber(s) for s in snrs if s > 20}
    sui_wins = {s: sui["switchnet"].ber(s) < sui["lmmse"].ber(s) for s in snrs if s > 10}
    ref = sui["switchnet"].ber(30.0)
    others = {name: res.reports[name]["switchnet"].ber(30.0)
              for name in ("sui5[0 4 8]", "sui5[0 5 12]")}
    close = all(ref / 3 <= b <= 3 * ref for b in others.values())
    ok = all(exp_wins.values()) and all(sui_wins.values()) and close

    def pairs(rep, wins):
        return ", ".join(f"{s:.0f} dB {rep['switchnet'].ber(s):.2e}/{rep['lmmse'].ber(s):.2e}"
                         for s in wins)

    record(acceptance_log, 5, ok,
           f"switchnet/lmmse EXP (alpha {res.settled_alpha['exp']:+.3f}): {pairs(exp, exp_wins)}; "
           f"SUI [0 4 10] (alpha {res.settled_alpha['sui5[0 4 10]']:+.3f}): "
           f"{pairs(sui, sui_wins)}; 30 dB profiles [0 4 10] {ref:.2e}, "
           + ", ".join(f"{k} {v:.2e}" for k, v in others.items()))
    assert all(exp_wins.values()), f"SwitchNet loses to LMMSE on EXP: {exp_wins}"
    assert all(sui_wins.values()), f"SwitchNet loses to LMMSE on SUI-5 [0 4 10]: {sui_wins}"
    assert close


def test_criterion_6_property_suite(acceptance_log, ofdm, tmp_path):
    start = time.perf_counter()
    checks = {}
    lmmse = build_lmmse(TheoreticalChannelSpec(0.5), 25.0, ofdm)

    clean = FrameSource(ofdm, Sui5Channel(14), None).generate(500, 0)
    x_d = map_bits(clean.bits, ofdm)
    checks["loopback"] = PerfectCsiDetector().detect(clean, None).tolist() == clean.bits.tolist()
    checks["circular"] = float(np.max(np.abs(clean.y_d - clean.h * x_d))) <= 1e-10
    checks["ls exact"] = float(np.max(np.abs(
        ls_estimate(clean.y_p, ofdm.pilot_symbols) - clean.h))) <= 1e-10

    noisy = FrameSource(ofdm, ExpChannel(0.5, 5), 20.0).generate(64, 1)
    com = ComNet.build(lmmse, ofdm, rng=0)
    checks["comnet init"] = float(np.max(np.abs(
        com.estimate_channel(noisy.y_p) - lmmse_estimate(noisy.y_p, ofdm.pilot_symbols, lmmse)))) <= 1e-10
    sw = SwitchNet.build(lmmse, ofdm, rng=0)
    randomize(sw.ce_layers, 5)
    plain = ComNet(sw.ce1, sw.sd, sw.cfg)
    checks["alpha=0"] = float(np.max(np.abs(
        sw.soft_bits(noisy.y_p, noisy.y_d) - plain.soft_bits(noisy.y_p, noisy.y_d)))) <= 1e-12

    grad_net = SwitchNet.build(lmmse, ofdm, rng=1)
    # small CE perturbation keeps the ZF division away from near-zero estimates
    randomize(grad_net.ce_layers, 2, 0.01)
    randomize(grad_net.sd.layers, 3, 0.1)
    grad_net.alpha = np.asarray(0.4)
    grad_net.alpha_trainable = True
    b = slice(0, 4)
    checks["finite difference"] = flat_fd_check(grad_net, noisy.y_p[b], noisy.y_d[b],
                                                noisy.bits[b], 0) < 1e-4

    low = FrameSource(ofdm, exp_family(), 10.0).generate(1000, 2)
    ls_mse = np.mean(np.abs(ls_estimate(low.y_p, ofdm.pilot_symbols) - low.h) ** 2)
    lm = baseline_lmmse(exp_family(), ofdm)
    lm_mse = np.mean(np.abs(lmmse_estimate(low.y_p, ofdm.pilot_symbols, lm) - low.h) ** 2)
    checks["lmmse <= ls @10 dB"] = lm_mse <= ls_mse

    write_dataset(tmp_path / "d.airx", noisy)
    checks["dataset round-trip"] = read_dataset(tmp_path / "d.airx").equals(noisy)
    again = FrameSource(ofdm, ExpChannel(0.5, 5), 20.0).generate(64, 1)
    checks["replay"] = again.equals(noisy)

    elapsed = time.perf_counter() - start
    ok = all(checks.values()) and elapsed < 60
    failed = [k for k, v in checks.items() if not v]
    record(acceptance_log, 6, ok, f"{len(checks) - len(failed)}/{len(checks)} properties hold "
           f"(failed: {failed or 'none'}); LMMSE MSE {lm_mse:.2e} vs LS {ls_mse:.2e}; {elapsed:.1f} s")
    assert not failed
    assert elapsed < 60


@pytest.mark.slow
def test_criterion_7_lr_sensitivity(acceptance_log, checkpoint, ofdm):
    channel = exp_family()
    pool = online_pool(channel, ofdm, 2500, 25.0, 21)
    test = FrameSource(ofdm, channel, 25.0).generate(2000, 22)
    net = checkpoint("comnet")
    before = bit_error_rate(net, test)
    oversized = 1e-3
    online_transfer_learn(net, pool, OnlineConfig(collected_symbols=2500), lr=oversized)
    after = bit_error_rate(net, test)
    degrades = after > before

    res = run_switch_experiment(checkpoint("switchnet"), None, OnlineConfig(alpha_lr=0.06))
    tails = {name: np.asarray(t[-len(t) // 5:]) for name, t in res.traces.items()}
    settled = {name: bool(np.all(np.abs(tail - (0.0 if name == "exp" else 1.0)) <= 0.2))
               for name, tail in tails.items()}
    ok = degrades and all(settled.values())
    record(acceptance_log, 7, ok,
           f"ComNet transfer at lr {oversized:g}: BER {before:.3e} -> {after:.3e}; alpha at lr 0.06, "
           "last 20% of epochs: " + ", ".join(f"{n} [{tails[n].min():+.2f}, {tails[n].max():+.2f}]"
                                               for n in tails))
    assert degrades
    assert all(settled.values()), f"alpha at 10x lr did not settle: {settled}"
