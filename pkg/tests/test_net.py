import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxskill.net import (
    ArchSpec,
    Genome,
    LstmState,
    StructuralError,
    decode,
    encode,
    layout_table,
    lstm_step,
    param_count,
)
from ctxskill.envs.flappy import decode_action

FB = {k: ArchSpec(k, 6, 2) for k in ("S", "C", "CS")}

# Two units, one input: x=[0.5], h=[0.1,-0.2], c=[0.3,-0.4].
# Rows of each gate act on [x; h].
HAND_W = np.array([
    [[0.1, 0.2, -0.3], [0.4, -0.5, 0.6]],   # input
    [[-0.7, 0.8, 0.9], [1.0, -1.1, 0.2]],   # forget
    [[0.3, -0.2, 0.1], [-0.4, 0.5, -0.6]],  # cell
    [[0.7, 0.1, -0.8], [0.2, 0.9, -0.3]],   # output
])
HAND_B = np.array([[0.05, -0.05], [0.5, 0.25], [-0.1, 0.1], [0.0, 0.3]])
# evaluated gate by gate with math.exp / math.tanh
HAND_H = [0.0990055735409891, -0.139517606041547]
HAND_C = [0.15919782624996617, -0.22366899513650335]


def reference_lstm(x, h, c, W, b):
    """Loop-by-loop LSTM used as an independent check."""
    z = list(x) + list(h)
    sig = lambda a: 1.0 / (1.0 + math.exp(-a))
    hn, cn = [], []
    for j in range(len(h)):
        a = [sum(W[g][j][m] * z[m] for m in range(len(z))) + b[g][j] for g in range(4)]
        cc = sig(a[1]) * c[j] + sig(a[0]) * math.tanh(a[2])
        cn.append(cc)
        hn.append(sig(a[3]) * math.tanh(cc))
    return hn, cn


class TestArch:
    def test_flappy_counts(self):
        assert [param_count(FB[k]) for k in ("S", "C", "CS")] == [287, 982, 1207]

    def test_lander_and_lane_cs_counts(self):
        # skill 8*10+10+50+5=145, lstm 4*(19*10+10)=800, ctrl 15*20+20+20*4+4=404
        assert param_count(ArchSpec("CS", 8, 4)) == 1349
        # skill 5*10+10+55=115, lstm 4*(16*10+10)=680, ctrl 320+42=362
        assert param_count(ArchSpec("CS", 5, 2)) == 1157

    def test_controller_width(self):
        assert FB["S"].ctrl_in == 5
        assert FB["C"].ctrl_in == 10
        assert FB["CS"].ctrl_in == 15
        assert FB["C"].context_in == 7

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            ArchSpec("X", 6, 2)

    def test_layout_is_contiguous_and_ordered(self):
        table = layout_table(FB["CS"])
        names = [n for n, _, _ in table]
        assert names[:4] == ["skill.W1", "skill.b1", "skill.W2", "skill.b2"]
        assert names[4::2][:4] == ["lstm.input.W", "lstm.forget.W", "lstm.cell.W", "lstm.output.W"]
        assert names[-4:] == ["ctrl.W1", "ctrl.b1", "ctrl.W2", "ctrl.b2"]
        pos = 0
        for _, off, shape in table:
            assert off == pos
            pos += int(np.prod(shape))
        assert pos == 1207


class TestDecode:
    @pytest.mark.parametrize("kind", ["S", "C", "CS"])
    def test_round_trip(self, kind):
        g = Genome.random(FB[kind], np.random.default_rng(3))
        assert np.array_equal(encode(decode(g, FB[kind])).weights, g.weights)

    def test_length_mismatch(self):
        with pytest.raises(StructuralError):
            decode(Genome(np.zeros(286)), FB["S"])

    def test_single_gene_hits_one_slot(self):
        arch = FB["CS"]
        for name, off, shape in layout_table(arch):
            w = np.zeros(param_count(arch))
            w[off] = 1.0
            net = decode(Genome(w), arch)
            for other, mat in net.layers.items():
                expected = 1.0 if other == name else 0.0
                assert np.abs(mat).sum() == expected
            assert net.layers[name].ravel()[0] == 1.0

    def test_weights_read_only(self):
        g = Genome.zeros(FB["S"])
        with pytest.raises(ValueError):
            g.weights[0] = 1.0

    def test_out_of_bounds_gene_detected(self):
        w = np.zeros(287)
        w[5] = 7.0
        assert not Genome(w).in_bounds()


class TestLstm:
    def test_zero_params_zero_state(self):
        W = np.zeros((4, 3, 7 + 3))
        h, s = lstm_step(np.ones(7), LstmState.zeros(3), W, np.zeros((4, 3)))
        assert np.all(h == 0) and np.all(s.c == 0)

    def test_zero_params_carry(self):
        v = np.array([0.4, -1.2, 2.0])
        W = np.zeros((4, 3, 5 + 3))
        h, s = lstm_step(np.zeros(5), LstmState(np.zeros(3), v.copy()), W, np.zeros((4, 3)))
        np.testing.assert_allclose(s.c, 0.5 * v, rtol=0, atol=1e-12)
        np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * v), rtol=0, atol=1e-12)

    def test_hand_case(self):
        st_ = LstmState(np.array([0.1, -0.2]), np.array([0.3, -0.4]))
        h, s = lstm_step(np.array([0.5]), st_, HAND_W, HAND_B)
        np.testing.assert_allclose(h, HAND_H, rtol=0, atol=1e-12)
        np.testing.assert_allclose(s.c, HAND_C, rtol=0, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        L, nx = 3, 4
        W = rng.uniform(-2, 2, (4, L, nx + L))
        b = rng.uniform(-2, 2, (4, L))
        x, h0, c0 = rng.normal(size=nx), rng.uniform(-1, 1, L), rng.normal(size=L)
        h, s = lstm_step(x, LstmState(h0, c0), W, b)
        rh, rc = reference_lstm(x, h0, c0, W, b)
        np.testing.assert_allclose(h, rh, rtol=0, atol=1e-12)
        np.testing.assert_allclose(s.c, rc, rtol=0, atol=1e-12)

    def test_reset(self):
        s = LstmState(np.ones(10), np.ones(10)).reset()
        assert not s.h.any() and not s.c.any()


class TestAct:
    @pytest.mark.parametrize("kind", ["S", "C", "CS"])
    def test_zero_net_glides(self, kind):
        net = decode(Genome.zeros(FB[kind]), FB[kind])
        out, _ = net.act(np.full(6, 0.3), None, 0.0)
        assert np.all(out.raw == 0.0)
        assert decode_action(out.raw) == (False, False)

    def test_s_state_untouched(self):
        net = decode(Genome.random(FB["S"], np.random.default_rng(1)), FB["S"])
        s = LstmState(np.full(10, 0.25), np.full(10, -0.5))
        _, s2 = net.act(np.full(6, 0.5), s, 0.3)
        assert s2.h.tobytes() == s.h.tobytes() and s2.c.tobytes() == s.c.tobytes()

    def test_s_history_free(self):
        net = decode(Genome.random(FB["S"], np.random.default_rng(2)), FB["S"])
        rng = np.random.default_rng(0)
        obs = rng.uniform(0, 1, 6)
        a1, _ = net.act(obs, LstmState(rng.normal(size=10), rng.normal(size=10)), 0.9)
        a2, _ = net.act(obs, None, 0.1)
        assert a1.raw.tobytes() == a2.raw.tobytes()

    def test_cs_state_advances_and_repeats(self):
        arch = FB["CS"]
        net = decode(Genome.random(arch, np.random.default_rng(5)), arch)
        obs_seq = np.random.default_rng(6).uniform(0, 1, (20, 6))

        def run():
            s, outs = None, []
            for t, o in enumerate(obs_seq):
                a, s = net.act(o, s, t / 20)
                outs.append(a.raw)
            return np.array(outs), s

        o1, s1 = run()
        o2, _ = run()
        assert o1.tobytes() == o2.tobytes()
        assert np.any(s1.h != 0)

    def test_module_outputs_shapes(self):
        arch = FB["CS"]
        net = decode(Genome.random(arch, np.random.default_rng(7)), arch)
        raw, skill, ctx, _ = net.module_outputs(np.full(6, 0.5), None, 0.0)
        assert raw.shape == (2,) and skill.shape == (5,) and ctx.shape == (10,)

    def test_wrong_obs_length(self):
        net = decode(Genome.zeros(FB["S"]), FB["S"])
        with pytest.raises(StructuralError):
            net.act(np.zeros(5), None, 0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(["S", "C", "CS"]), st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
    def test_raw_bounded(self, kind, seed, scale):
        # tanh of a large pre-activation rounds to exactly +-1.0 in float64,
        # so the closed interval is the property that holds numerically
        arch = FB[kind]
        rng = np.random.default_rng(seed)
        net = decode(Genome.random(arch, rng), arch)
        out, _ = net.act(rng.uniform(-1, 1, 6) * scale, None, 0.5)
        assert np.all(np.abs(out.raw) <= 1.0) and np.all(np.isfinite(out.raw))
