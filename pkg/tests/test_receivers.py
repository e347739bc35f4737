import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airx import nnkit
from airx.baseband import OfdmConfig, demap_symbols, to_complex_vector, to_real_vector
from airx.channel import (ExpChannel, Sui5Channel, TheoreticalChannelSpec, TwoRayChannel,
                          exp_family)
from airx.data import FrameSource
from airx.exceptions import ConfigurationError
from airx.nnkit import Dense, mse_grad
from airx.receivers import (ComNet, FcDnn, SubnetBank, SwitchNet, build_lmmse, comnet_receive,
                            fcdnn_receive, hard_decision, lmmse_estimate, lmmse_mmse_baseline,
                            load_receiver, ls_estimate, ls_zf_baseline, switchnet_receive,
                            zf_detect)

SPEC = TheoreticalChannelSpec(0.5)


@pytest.fixture(scope="module")
def lmmse():
    return build_lmmse(SPEC, 25.0, OfdmConfig())


@pytest.fixture(scope="module")
def frames():
    return FrameSource(OfdmConfig(), ExpChannel(0.5, 5), 20.0).generate(16, 1)


def randomize(layers, seed, scale=0.05):
    r = np.random.default_rng(seed)
    for layer in layers:
        layer.weight = layer.weight + scale * r.standard_normal(layer.weight.shape)
        layer.bias = layer.bias + scale * r.standard_normal(layer.bias.shape)


class TestClassical:
    def test_ls_identity(self, cfg):
        assert np.allclose(ls_estimate(cfg.pilot_symbols, cfg.pilot_symbols), 1.0)

    def test_ls_hand_division(self):
        assert ls_estimate(np.sqrt(2) * 1j, (1 + 1j) / np.sqrt(2)) == pytest.approx(1 + 1j)

    def test_ls_noiseless_matches_dft(self, cfg):
        ds = FrameSource(cfg, Sui5Channel(10), None).generate(20, 0)
        assert np.max(np.abs(ls_estimate(ds.y_p, cfg.pilot_symbols) - ds.h)) < 1e-10

    def test_zf_examples(self):
        assert zf_detect(np.array([1 + 1j]), np.array([2.0]))[0] == pytest.approx(0.5 + 0.5j)
        out = zf_detect(np.array([1.0, 1.0, 2.0]), np.array([1.0, 1e-15, 4.0]))
        assert np.array_equal(out, [1.0, 0.0, 0.5])

    @pytest.mark.parametrize("channel", [ExpChannel(0.7, 7), Sui5Channel(14), TwoRayChannel(0.5)])
    def test_noiseless_perfect_csi(self, cfg, channel):
        ds = FrameSource(cfg, channel, None).generate(1000, 3)
        assert np.array_equal(demap_symbols(zf_detect(ds.y_d, ds.h)), ds.bits)

    def test_mmse_reduces_to_zf(self, cfg):
        ds = FrameSource(cfg, ExpChannel(), None).generate(50, 2)
        lm = build_lmmse(SPEC, np.inf, cfg)
        assert np.array_equal(lmmse_mmse_baseline(ds.y_p, ds.y_d, cfg, lm, 0.0), ds.bits)


class TestLmmse:
    def test_infinite_snr_identity(self, cfg):
        assert np.allclose(build_lmmse(SPEC, np.inf, cfg).weight, np.eye(64))
        # the limit is reachable numerically only when R is well conditioned
        wide = TheoreticalChannelSpec(30.0)
        gaps = [np.abs(build_lmmse(wide, s, cfg).weight - np.eye(64)).max() for s in (25, 50, 80)]
        assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-6

    def test_closed_form(self, cfg, lmmse):
        f = np.r_[1:33, 96 - 128:0]
        lag = f[:, None] - f[None, :]
        r = 1 / (1 + 2j * np.pi * 0.5 * lag / 128)
        expect = r @ np.linalg.inv(r + 10 ** -2.5 * np.eye(64))
        assert np.allclose(lmmse.weight, expect, atol=1e-12)

    def test_hermitian(self, lmmse):
        assert np.allclose(lmmse.weight, lmmse.weight.conj().T, atol=1e-12)

    def test_real_block_structure(self, lmmse):
        w = lmmse.weight
        assert np.array_equal(lmmse.weight_real, np.block([[w.real, -w.imag], [w.imag, w.real]]))

    def test_real_complex_consistency(self, lmmse):
        r = np.random.default_rng(0)
        v = r.standard_normal((100, 64)) + 1j * r.standard_normal((100, 64))
        real = to_real_vector(v) @ lmmse.weight_real.T
        assert np.max(np.abs(real - to_real_vector(v @ lmmse.weight.T))) < 1e-10

    def test_beats_ls(self, cfg, lmmse):
        ds = FrameSource(cfg, ExpChannel(0.5, 5), 25.0).generate(1000, 4)
        ls = np.mean(np.abs(ls_estimate(ds.y_p, cfg.pilot_symbols) - ds.h) ** 2)
        lm = np.mean(np.abs(lmmse_estimate(ds.y_p, cfg.pilot_symbols, lmmse) - ds.h) ** 2)
        assert lm <= ls

    def test_mismatched_n(self, cfg):
        with pytest.raises(ConfigurationError):
            build_lmmse(TheoreticalChannelSpec(0.5, fft_size=64), 25, cfg)

    def test_ber_close_to_zf_oracle(self, cfg, lmmse):
        ds = FrameSource(cfg, ExpChannel(0.5, 5), 40.0).generate(7813, 5)
        mmse = np.mean(lmmse_mmse_baseline(ds.y_p, ds.y_d, cfg, lmmse, 1e-4) != ds.bits)
        h = lmmse_estimate(ds.y_p, cfg.pilot_symbols, lmmse)
        zf = np.mean(demap_symbols(zf_detect(ds.y_d, h)) != ds.bits)
        assert zf / 2 <= mmse <= 2 * zf

    def test_ber_monotone_in_snr(self, cfg, lmmse):
        bers = []
        for i, snr in enumerate((5, 15, 25, 35)):
            ds = FrameSource(cfg, ExpChannel(0.5, 5), snr).generate(782, 10 + i)
            noise = 10 ** (-snr / 10)
            bers.append(np.mean(lmmse_mmse_baseline(ds.y_p, ds.y_d, cfg, lmmse, noise) != ds.bits))
        assert all(a >= b for a, b in zip(bers, bers[1:]))

    def test_ls_zf_baseline(self, cfg):
        ds = FrameSource(cfg, ExpChannel(), None).generate(10, 0)
        assert np.array_equal(ls_zf_baseline(ds.y_p, ds.y_d, cfg), ds.bits)


class TestFcDnn:
    def test_param_count(self):
        assert FcDnn.build(rng=0).count_params() == 2286448

    def test_zero_weights(self, frames):
        net = FcDnn.build(rng=0)
        for layer in net.layers:
            layer.weight = np.zeros_like(layer.weight)
        soft = net.soft_bits(frames.y_p, frames.y_d)
        assert np.all(soft == 0.5) and np.all(net.receive(frames.y_p, frames.y_d) == 1)

    def test_subnet_owns_block(self, frames):
        net = FcDnn.build(rng=0)
        soft = net.soft_bits(frames.y_p, frames.y_d)
        x = FcDnn.features(frames.y_p, frames.y_d)
        assert x.shape == (16, 256)
        assert np.allclose(soft[:, 48:64], nnkit.predict(net.bank.subnets[3], x))

    def test_missing_params(self, frames):
        with pytest.raises(ConfigurationError):
            fcdnn_receive(frames.y_p, frames.y_d, None)


class TestComNet:
    def test_param_and_flop_count(self, lmmse):
        net = ComNet.build(lmmse, rng=0)
        assert net.count_params() == 155840 and net.count_flops() == 309248

    def test_init_reproduces_lmmse(self, cfg, lmmse, frames):
        net = ComNet.build(lmmse, rng=0)
        _, h = comnet_receive(frames.y_p, frames.y_d, net)
        assert np.max(np.abs(h - lmmse_estimate(frames.y_p, cfg.pilot_symbols, lmmse))) < 1e-10

    def test_linear_mode(self, lmmse):
        net = ComNet.build(lmmse, sd_mode="linear", rng=0)
        assert net.sd_mode == "linear"
        assert [l.activation for l in net.sd.subnets[0]] == ["none", "sigmoid"]
        with pytest.raises(ConfigurationError):
            ComNet.build(lmmse, sd_mode="quadratic")

    def test_sd_mode_mismatch(self, lmmse, frames):
        with pytest.raises(ConfigurationError):
            comnet_receive(frames.y_p, frames.y_d, ComNet.build(lmmse, rng=0), "linear")

    def test_output_ranges(self, lmmse, frames):
        net = ComNet.build(lmmse, rng=1)
        soft = net.soft_bits(frames.y_p, frames.y_d)
        assert soft.shape == (16, 128) and np.all((soft > 0) & (soft < 1))
        assert set(np.unique(net.receive(frames.y_p, frames.y_d))) <= {0, 1}

    def test_short_path(self, cfg, lmmse, frames):
        net = ComNet.build(lmmse, rng=0)
        net.short_path = True
        h = lmmse_estimate(frames.y_p, cfg.pilot_symbols, lmmse)
        assert np.array_equal(net.receive(frames.y_p, frames.y_d),
                              demap_symbols(zf_detect(frames.y_d, h)))


class TestSwitchNet:
    def build(self, lmmse, alpha, seed=0):
        net = SwitchNet.build(lmmse, rng=seed)
        randomize([net.ce1, net.ce2], seed + 1, 0.01)
        net.alpha = np.asarray(alpha)
        return net

    def test_counts(self, lmmse):
        net = SwitchNet.build(lmmse, rng=0)
        assert net.count_params() == 172352 and net.count_flops() == 342016

    def test_alpha_zero_matches_comnet(self, lmmse, frames):
        net = self.build(lmmse, 0.0)
        com = ComNet(net.ce1, net.sd, net.cfg)
        a = net.soft_bits(frames.y_p, frames.y_d)
        b = com.soft_bits(frames.y_p, frames.y_d)
        assert np.max(np.abs(a - b)) <= 1e-12

    @given(st.floats(-2, 2))
    @settings(max_examples=10)
    def test_expression_oracle(self, alpha):
        net = self.build(build_lmmse(SPEC, 25.0, OfdmConfig()), alpha)
        cfg = net.cfg
        ds = FrameSource(cfg, ExpChannel(), 20.0).generate(4, 0)
        hls = to_real_vector(ds.y_p / cfg.pilot_symbols)
        w1, b1, w2, b2 = net.ce1.weight, net.ce1.bias, net.ce2.weight, net.ce2.bias
        inner = hls @ w1.T + b1
        expect = inner @ (alpha * w2 + np.eye(128)).T + alpha * b2
        assert np.allclose(net.estimate_channel(ds.y_p), to_complex_vector(expect), atol=1e-12)
        _, h = switchnet_receive(ds.y_p, ds.y_d, net)
        assert np.allclose(h, to_complex_vector(expect), atol=1e-12)


def flat_fd_check(net, y_p, y_d, target, seed, trainable_alpha=False):
    """Compare ``net.backward`` against central differences on random coordinates."""
    soft, _, cache = net.forward(y_p, y_d)
    grads = net.backward(cache, mse_grad(soft, target))
    params = net.params()
    r = np.random.default_rng(seed)
    worst = 0.0
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        for _ in range(3):
            idx = tuple(int(r.integers(0, s)) for s in p.shape)
            losses = []
            for step in (1e-5, -1e-5):
                trial = [q.copy() for q in params]
                trial[i][idx] += step
                net.set_params(trial)
                losses.append(nnkit.mse_loss(net.soft_bits(y_p, y_d), target))
            net.set_params(params)
            fd = (losses[0] - losses[1]) / 2e-5
            worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-7))
    return worst


class TestGradients:
    def test_comnet_end_to_end(self, lmmse, frames):
        net = ComNet.build(lmmse, rng=2)
        randomize(net.sd.layers, 3, 0.1)
        assert flat_fd_check(net, frames.y_p[:4], frames.y_d[:4], frames.bits[:4], 0) < 1e-4

    def test_switchnet_alpha_and_ce(self, lmmse, frames):
        net = TestSwitchNet().build(lmmse, 0.3, 4)
        net.alpha_trainable = True
        assert flat_fd_check(net, frames.y_p[:4], frames.y_d[:4], frames.bits[:4], 1) < 1e-4

    def test_frozen_ce_gets_no_gradient(self, lmmse, frames):
        net = SwitchNet.build(lmmse, rng=0)
        for layer in net.ce_layers:
            layer.trainable = False
        net.alpha_trainable = True
        soft, _, cache = net.forward(frames.y_p, frames.y_d)
        grads = net.backward(cache, mse_grad(soft, frames.bits))
        assert grads[:4] == [None] * 4 and grads[4] is not None

    def test_fcdnn(self, frames):
        net = FcDnn.build(hidden=(20,), rng=0)
        assert flat_fd_check(net, frames.y_p[:4], frames.y_d[:4], frames.bits[:4], 2) < 1e-4


class TestCheckpoints:
    @pytest.mark.parametrize("kind", ["fcdnn", "comnet", "linear", "switchnet"])
    def test_roundtrip(self, tmp_path, lmmse, frames, kind):
        if kind == "fcdnn":
            net = FcDnn.build(rng=0)
        elif kind == "switchnet":
            net = TestSwitchNet().build(lmmse, 0.7)
        else:
            net = ComNet.build(lmmse, sd_mode="linear" if kind == "linear" else "nonlinear", rng=0)
        net.save(tmp_path / "net.airx")
        back = load_receiver(tmp_path / "net.airx")
        assert type(back) is type(net)
        assert np.array_equal(back.soft_bits(frames.y_p, frames.y_d), net.soft_bits(frames.y_p, frames.y_d))
        if kind == "switchnet":
            assert float(back.alpha) == 0.7


class TestHardDecision:
    def test_tie_goes_to_one(self):
        assert hard_decision(np.array([0.5, 0.4999, 0.9])).tolist() == [1, 0, 1]

    def test_bank_width_check(self):
        with pytest.raises(Exception):
            SubnetBank([[Dense.init(3, 2)], [Dense.init(4, 2)]])
