import numpy as np
import pytest

from bonemc import build_ctmc, parse_model, resolve_constants
from bonemc.errors import BuildError
from bonemc.statespace import (export_matrix_market, export_reward_vectors,
                               export_states_csv, rate_matrix)

from conftest import HEALTHY

# Golden value frozen from an independent brute-force reachability script:
# the bundled model reaches 1506 of the 2424 syntactically possible states
# under either parameter point (guards are constant-free).
GOLDEN_REACHABLE = 1506


class TestBuild:
    def test_reachable_state_count(self, healthy_ctmc, sick_ctmc):
        assert healthy_ctmc.n_states == GOLDEN_REACHABLE
        assert sick_ctmc.n_states == GOLDEN_REACHABLE
        assert GOLDEN_REACHABLE <= 6 * 2 * 101 * 2

    def test_initial_state_is_index_zero(self, healthy_ctmc):
        assert healthy_ctmc.var_names == ("Oc", "pc", "Ob", "pb")
        assert healthy_ctmc.states[0] == (0, True, 1, True)

    def test_synchronized_rate_is_product(self, healthy_ctmc):
        s = healthy_ctmc.find_state(Oc=2, pc=True, Ob=60, pb=True)
        rankl = [i for i in range(healthy_ctmc.n_transitions)
                 if healthy_ctmc.src[i] == s
                 and healthy_ctmc.label[i] == "rankl"]
        assert len(rankl) == 1
        # (Oc + 0.1) * (rankLrate * Ob) = 2.1 * 6.0
        assert healthy_ctmc.rate[rankl[0]] == pytest.approx(12.6, abs=1e-12)

    def test_only_proliferation_enabled_initially(self, healthy_ctmc):
        outs = np.flatnonzero(healthy_ctmc.src == 0)
        assert len(outs) == 1
        i = outs[0]
        assert healthy_ctmc.label[i] is None
        assert healthy_ctmc.rate[i] == 1.0          # sqrt(Ob) at Ob=1
        assert healthy_ctmc.states[healthy_ctmc.dst[i]] == (0, True, 2, True)

    def test_resorb_carries_reward_and_blocks_pb(self, healthy_ctmc):
        c = healthy_ctmc
        ri = c.reward_index("boneResorbed")
        resorbs = [i for i in range(c.n_transitions) if c.label[i] == "resorb"]
        assert resorbs
        for i in resorbs:
            assert c.rewards[i, ri] == 0.5          # resorbRate per firing
            src, dst = c.states[c.src[i]], c.states[c.dst[i]]
            assert src[3] is True and dst[3] is False   # pb flips
            assert dst[0] == src[0] - 1                 # an osteoclast dies

    def test_unlabeled_transitions_carry_no_reward(self, healthy_ctmc):
        c = healthy_ctmc
        unl = [i for i in range(c.n_transitions) if c.label[i] is None]
        assert np.all(c.rewards[unl] == 0.0)

    def test_all_rates_positive(self, healthy_ctmc):
        assert np.all(healthy_ctmc.rate > 0)

    def test_deterministic_rebuild(self, bone_ast, healthy_ctmc):
        again = build_ctmc(resolve_constants(bone_ast, HEALTHY))
        assert again.states == healthy_ctmc.states
        assert np.array_equal(again.src, healthy_ctmc.src)
        assert np.array_equal(again.dst, healthy_ctmc.dst)
        assert np.array_equal(again.rate, healthy_ctmc.rate)
        assert again.label == healthy_ctmc.label


class TestExitRate:
    def test_sum_of_outgoing(self):
        src = """
        module m
        x:[0..2] init 0;
        [] x=0 -> 0.5:(x'=1);
        [] x=0 -> 1.0:(x'=2);
        endmodule
        """
        c = build_ctmc(resolve_constants(parse_model(src)))
        assert c.exit_rate(0) == pytest.approx(1.5)

    def test_absorbing_state_is_zero(self, two_state_ctmc):
        assert two_state_ctmc.exit_rate(1) == 0.0

    def test_max_exit_matches_scan(self, healthy_ctmc):
        per_state = [healthy_ctmc.exit_rate(s)
                     for s in range(healthy_ctmc.n_states)]
        assert healthy_ctmc.exit_rates.max() == pytest.approx(max(per_state))


class TestSemanticsEdges:
    def test_self_loop_retained(self):
        src = """
        module m
        x:[0..1] init 0;
        [spin] x=0 -> 2:true;
        endmodule
        rewards "turns"
        [spin] true:1;
        endrewards
        """
        c = build_ctmc(resolve_constants(parse_model(src)))
        assert c.n_transitions == 1
        assert c.src[0] == c.dst[0] == 0
        assert c.exit_rate(0) == 2.0
        assert c.rewards[0, 0] == 1.0

    def test_zero_rate_disables_command(self):
        src = """
        module m
        x:[0..1] init 0;
        [] x=0 -> 0:(x'=1);
        endmodule
        """
        c = build_ctmc(resolve_constants(parse_model(src)))
        assert c.n_states == 1
        assert c.n_transitions == 0

    def test_negative_rate_is_hard_error_with_witness(self):
        src = """
        module m
        x:[0..3] init 0;
        [] x<3 -> 2-3*x:(x'=x+1);
        endmodule
        """
        with pytest.raises(BuildError, match=r"negative rate.*x=1"):
            build_ctmc(resolve_constants(parse_model(src)))

    def test_out_of_range_update_is_error_with_witness(self):
        src = """
        module m
        x:[0..2] init 0;
        [] true -> 1:(x'=x+1);
        endmodule
        """
        with pytest.raises(BuildError, match=r"outside \[0\.\.2\].*x=2"):
            build_ctmc(resolve_constants(parse_model(src)))

    def test_state_cap(self, bone_ast):
        rm = resolve_constants(bone_ast, HEALTHY)
        with pytest.raises(BuildError, match="cap"):
            build_ctmc(rm, state_cap=100)

    def test_full_synchronization_blocks(self):
        # second module has the label but no enabled command: label blocked
        src = """
        module a
        x:[0..1] init 0;
        [go] x=0 -> 1:(x'=1);
        endmodule
        module b
        y:[0..1] init 0;
        [go] y=1 -> 1:(y'=0);
        endmodule
        """
        c = build_ctmc(resolve_constants(parse_model(src)))
        assert c.n_states == 1
        assert c.n_transitions == 0

    def test_synchronized_update_union(self):
        src = """
        module a
        x:[0..1] init 0;
        [go] x=0 -> 2:(x'=1);
        endmodule
        module b
        y:[0..1] init 0;
        [go] y=0 -> 3:(y'=1);
        endmodule
        """
        c = build_ctmc(resolve_constants(parse_model(src)))
        assert c.n_transitions == 1
        assert c.rate[0] == pytest.approx(6.0)
        assert c.states[c.dst[0]] == (1, 1)

    def test_parallel_transitions_kept_distinct(self):
        src = """
        module m
        x:[0..1] init 0;
        [] x=0 -> 1:(x'=1);
        [] x=0 -> 2:(x'=1);
        endmodule
        """
        c = build_ctmc(resolve_constants(parse_model(src)))
        assert c.n_transitions == 2
        assert c.exit_rate(0) == pytest.approx(3.0)
        # the exported matrix sums them
        assert rate_matrix(c)[0, 1] == pytest.approx(3.0)


class TestExport:
    def test_matrix_market_and_csv(self, tmp_path, two_state_ctmc):
        export_matrix_market(two_state_ctmc, tmp_path / "m.mtx")
        export_states_csv(two_state_ctmc, tmp_path / "s.csv")
        files = export_reward_vectors(two_state_ctmc, tmp_path)
        from scipy.io import mmread
        m = mmread(tmp_path / "m.mtx")
        assert m.shape == (2, 2)
        assert m.tocsr()[0, 1] == pytest.approx(1.0)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "state,x"
        assert lines[1] == "0,0"
        rho = np.asarray(mmread(files[0])).ravel()
        assert rho[0] == pytest.approx(2.0)         # rate 1 * reward 2
        assert rho[1] == 0.0
