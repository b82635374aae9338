"""SMP execution fabric: configs, message maps, coins, transcripts, run loop."""

import numpy as np
import pytest

from smpinfer.dist import Pmf, uniform
from smpinfer.smp import (
    MessageMap,
    ProtocolConfig,
    PublicCoins,
    Transcript,
    Verdict,
    derive_private_coins,
    public_coins,
    run_smp,
    trial_seed_seq,
)


class TestProtocolConfig:
    def test_pairwise_not_implemented(self):
        with pytest.raises(NotImplementedError):
            ProtocolConfig(k=4, ell=1, n=10, coin_mode="pairwise")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            ProtocolConfig(k=4, ell=1, n=10, coin_mode="telepathic")

    def test_bounds(self):
        with pytest.raises(ValueError):
            ProtocolConfig(k=4, ell=0, n=10)
        with pytest.raises(ValueError):
            ProtocolConfig(k=4, ell=1, n=0)

    def test_collapses_to_centralized(self):
        assert ProtocolConfig(k=4, ell=2, n=1).collapses_to_centralized
        assert not ProtocolConfig(k=8, ell=2, n=1).collapses_to_centralized


class TestMessageMap:
    def test_deterministic_map(self):
        m = MessageMap.deterministic_map(4, 2, [0, 1, 2, 3])
        assert m.deterministic
        rng = np.random.default_rng(0)
        assert [m.message_for(x, rng) for x in range(4)] == [0, 1, 2, 3]

    def test_rows_must_be_stochastic(self):
        with pytest.raises(ValueError):
            MessageMap(k=2, ell=1, rows=np.array([[0.5, 0.6], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            MessageMap(k=2, ell=1, rows=np.array([[1.0, 0.0]]))

    def test_randomized_row(self):
        rows = np.array([[0.5, 0.5], [1.0, 0.0]])
        m = MessageMap(k=2, ell=1, rows=rows)
        assert not m.deterministic
        rng = np.random.default_rng(3)
        draws = [m.message_for(0, rng) for _ in range(2000)]
        assert abs(np.mean(draws) - 0.5) < 0.05

    def test_out_of_range_symbol_map(self):
        with pytest.raises(ValueError):
            MessageMap.deterministic_map(2, 1, [0, 2])


class TestPublicCoins:
    def test_partition_balanced_and_logged(self):
        coins = public_coins(0)
        part = coins.balanced_partition(10, 3)
        assert part.balanced
        assert coins.draw_log == [("balanced_partition", 10, 3)]
        assert coins.bits_used == 10 * 2  # ceil(log2 3) = 2 bits per symbol

    def test_subset_bits(self):
        coins = public_coins(0)
        S = coins.subset(16, 3)
        assert S.s == 3 and len(set(S.members.tolist())) == 3
        assert coins.bits_used == 3 * 4

    def test_element_range(self):
        coins = public_coins(0)
        assert 0 <= coins.element(7) < 7
        assert coins.bits_used == 3

    def test_same_seed_replays_identically(self):
        a, b = public_coins(42), public_coins(42)
        pa = a.balanced_partition(12, 4)
        pb = b.balanced_partition(12, 4)
        assert np.array_equal(pa.assign, pb.assign)

    def test_partition_requires_L_le_k(self):
        with pytest.raises(ValueError):
            public_coins(0).balanced_partition(3, 4)


class TestStreams:
    def test_private_streams_deterministic_and_distinct(self):
        a = derive_private_coins(5, 0).random(4)
        b = derive_private_coins(5, 0).random(4)
        c = derive_private_coins(5, 1).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_trial_seed_seq_distinct(self):
        a = np.random.default_rng(trial_seed_seq(1, 0, 0)).random(3)
        b = np.random.default_rng(trial_seed_seq(1, 0, 1)).random(3)
        assert not np.array_equal(a, b)


class TestTranscript:
    def test_json_roundtrip(self):
        t = Transcript(messages=np.array([0, 1, 3]), ell=2, public_seed=7,
                       public_draw_log=[("subset", 8, 3)])
        t2 = Transcript.from_json_line(t.to_json_line())
        assert np.array_equal(t2.messages, t.messages)
        assert t2.ell == 2 and t2.public_seed == 7
        assert t2.public_draw_log == [("subset", 8, 3)]

    def test_message_width_checked(self):
        with pytest.raises(ValueError):
            Transcript(messages=np.array([0, 2]), ell=1)


class TestVerdict:
    def test_decisions(self):
        Verdict(decision="accept_uniform")
        Verdict(decision="symbol", symbol=3)
        with pytest.raises(ValueError):
            Verdict(decision="maybe")
        with pytest.raises(ValueError):
            Verdict(decision="symbol")
        with pytest.raises(ValueError):
            Verdict(decision="reject", symbol=1)


class TestRunSmp:
    def test_identity_strategy_majority(self):
        # ell >= log2 k: players send their sample; referee outputs the mode.
        k, n = 4, 400
        cfg = ProtocolConfig(k=k, ell=2, n=n, master_seed=9)
        p = Pmf(k=k, probs=np.array([0.7, 0.1, 0.1, 0.1]))
        ident = MessageMap.deterministic_map(k, 2, np.arange(k))

        def referee(messages):
            return Verdict(decision="symbol", symbol=int(np.bincount(messages).argmax()))

        verdict, transcript = run_smp(cfg, lambda i, coins: ident, referee, p)
        assert verdict.symbol == 0
        assert transcript.messages.size == n
        emp = np.bincount(transcript.messages, minlength=k) / n
        assert np.max(np.abs(emp - p.probs)) < 0.1

    def test_deterministic_given_master_seed(self):
        cfg = ProtocolConfig(k=4, ell=2, n=50, master_seed=3)
        ident = MessageMap.deterministic_map(4, 2, np.arange(4))
        ref = lambda msgs: Verdict(decision="accept_uniform")
        _, t1 = run_smp(cfg, lambda i, c: ident, ref, uniform(4))
        _, t2 = run_smp(cfg, lambda i, c: ident, ref, uniform(4))
        assert np.array_equal(t1.messages, t2.messages)

    def test_public_mode_passes_coins(self):
        cfg = ProtocolConfig(k=4, ell=2, n=5, coin_mode="public", master_seed=1)
        seen = {}

        def strategies(i, coins):
            seen["coins"] = coins
            return MessageMap.deterministic_map(4, 2, np.arange(4))

        def referee(messages, coins):
            assert coins is seen["coins"]
            return Verdict(decision="accept_uniform")

        verdict, transcript = run_smp(cfg, strategies, referee, uniform(4))
        assert transcript.public_seed == 1

    def test_alphabet_mismatch(self):
        cfg = ProtocolConfig(k=4, ell=2, n=5)
        ident = MessageMap.deterministic_map(4, 2, np.arange(4))
        with pytest.raises(ValueError):
            run_smp(cfg, lambda i, c: ident, lambda m: Verdict(decision="reject"), uniform(5))

    def test_channel_mismatch(self):
        cfg = ProtocolConfig(k=4, ell=1, n=5)
        wide = MessageMap.deterministic_map(4, 2, np.arange(4))
        with pytest.raises(ValueError):
            run_smp(cfg, lambda i, c: wide, lambda m: Verdict(decision="reject"), uniform(4))
