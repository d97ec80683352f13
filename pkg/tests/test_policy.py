import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpaprkit import (
    ATOMIC_PER_NONZERO,
    CHUNKED_SORTED,
    MAX_TEAM_VECTOR,
    PhiStrategy,
    PolicyParams,
    PolicySpace,
    SolverOptions,
    auto_vector_size,
    default_policy,
    enumerate_policies,
    grid_search,
    is_valid_policy,
    map_policy_to_kernel,
    parse_policy,
    random_count_tensor,
)
from cpaprkit.policy import detect_worker_budget, format_heatmaps


class TestPolicyParams:
    def test_boundary_allowed(self):
        p = PolicyParams(1, 32, 32)
        assert p.team_size * p.vector_size == MAX_TEAM_VECTOR

    def test_over_cap_rejected(self):
        with pytest.raises(ValueError, match="1024"):
            PolicyParams(1, 64, 32)

    @pytest.mark.parametrize("triple", [(0, 1, 1), (1, 0, 1), (1, 1, 0)])
    def test_nonpositive_rejected(self, triple):
        with pytest.raises(ValueError):
            PolicyParams(*triple)

    def test_is_valid_policy(self):
        assert is_valid_policy(8192, 1, 1)
        assert is_valid_policy(1, 32, 32)
        assert not is_valid_policy(1, 64, 32)
        assert not is_valid_policy(1, 0, 1)

    def test_logical_workers_and_label(self):
        p = PolicyParams(4, 8, 2)
        assert p.logical_workers == 32
        assert p.label() == "4x8x2"

    def test_parse_policy(self):
        assert parse_policy("2,4,8") == PolicyParams(2, 4, 8)
        with pytest.raises(ValueError, match="league,team,vector"):
            parse_policy("2,4")
        with pytest.raises(ValueError, match="integers"):
            parse_policy("a,b,c")

    def test_default_policy_valid(self):
        p = default_policy()
        assert is_valid_policy(p.league_size, p.team_size, p.vector_size)


class TestAutoVector:
    def test_known_widths(self):
        assert auto_vector_size(1) == 32
        assert auto_vector_size(32) == 32
        assert auto_vector_size(64) == 16
        assert auto_vector_size(1024) == 1

    @given(st.integers(1, 4096))
    @settings(max_examples=60, deadline=None)
    def test_always_valid_and_power_of_two(self, team):
        width = auto_vector_size(team)
        assert width >= 1
        assert width & (width - 1) == 0
        assert team * width <= MAX_TEAM_VECTOR or width == 1


class TestEnumerate:
    def test_boundary_policy_survives(self):
        space = PolicySpace(leagues=[1], teams=[32], vectors=[32])
        assert enumerate_policies(space) == [PolicyParams(1, 32, 32)]

    def test_over_cap_filtered_to_empty(self):
        space = PolicySpace(leagues=[1], teams=[64], vectors=[32])
        assert enumerate_policies(space) == []

    def test_lexicographic_order(self):
        space = PolicySpace(leagues=[1, 2], teams=[1, 2], vectors=[1])
        got = [(p.league_size, p.team_size, p.vector_size)
               for p in enumerate_policies(space)]
        assert got == [(1, 1, 1), (1, 2, 1), (2, 1, 1), (2, 2, 1)]

    def test_duplicate_axis_values_collapse(self):
        space = PolicySpace(leagues=[2, 2], teams=[1], vectors=[4])
        assert enumerate_policies(space) == [PolicyParams(2, 1, 4)]

    def test_auto_vector_space(self):
        space = PolicySpace(leagues=[1], teams=[1, 64, 1024], auto_vector=True)
        got = enumerate_policies(space)
        assert [(p.team_size, p.vector_size) for p in got] == [
            (1, 32), (64, 16), (1024, 1),
        ]

    def test_empty_space_rejected(self):
        with pytest.raises(ValueError):
            PolicySpace(leagues=[], teams=[1], vectors=[1])
        with pytest.raises(ValueError):
            PolicySpace(leagues=[1], teams=[1], vectors=[])

    def test_never_emits_invalid(self):
        space = PolicySpace(
            leagues=[1, 4], teams=[1, 16, 64, 256], vectors=[1, 8, 32]
        )
        for p in enumerate_policies(space):
            assert p.team_size * p.vector_size <= MAX_TEAM_VECTOR


class TestSchedule:
    def test_sequential_degenerate(self):
        s = map_policy_to_kernel(PolicyParams(1, 1, 1), ATOMIC_PER_NONZERO, 5)
        assert s.workers == 1
        assert s.concurrency == 1
        assert s.width == 1
        assert s.n_tiles == 5

    def test_hand_tiling(self):
        # nnz=10, width 3: tiles [0,3) [3,6) [6,9) [9,10)
        s = map_policy_to_kernel(
            PolicyParams(2, 1, 3), ATOMIC_PER_NONZERO, 10, worker_budget=2
        )
        assert s.n_tiles == 4
        assert [s.tile_bounds(t) for t in range(4)] == [
            (0, 3), (3, 6), (6, 9), (9, 10)
        ]
        assert [s.worker_of(t) for t in range(4)] == [0, 1, 0, 1]

    def test_chunk_size_override(self):
        strategy = PhiStrategy("chunked", chunk_size=7)
        s = map_policy_to_kernel(PolicyParams(1, 1, 32), strategy, 20)
        assert s.kind == "chunked"
        assert s.width == 7

    def test_chunked_defaults_to_vector_size(self):
        s = map_policy_to_kernel(PolicyParams(1, 1, 16), CHUNKED_SORTED, 20)
        assert s.width == 16

    def test_concurrency_capped_by_budget(self):
        s = map_policy_to_kernel(
            PolicyParams(8, 4, 1), ATOMIC_PER_NONZERO, 100, worker_budget=3
        )
        assert s.workers == 32
        assert s.concurrency == 3

    def test_coverage_exactly_once(self, rng):
        for _ in range(25):
            nnz = int(rng.integers(0, 300))
            policy = PolicyParams(
                int(rng.integers(1, 9)),
                int(rng.integers(1, 9)),
                int(rng.integers(1, 33)),
            )
            strategy = (
                ATOMIC_PER_NONZERO
                if rng.integers(0, 2) == 0
                else PhiStrategy("chunked", chunk_size=int(rng.integers(1, 17)))
            )
            s = map_policy_to_kernel(policy, strategy, nnz)
            assert (s.coverage_counts() == 1).all()

    def test_detect_worker_budget_positive(self):
        assert detect_worker_budget() >= 1


class TestGridSearch:
    def _tensor(self):
        return random_count_tensor((8, 7, 6), 150, seed=17)

    def _options(self):
        return SolverOptions(rank=2, max_outer=2, backend="numpy")

    def test_structure_and_baseline_speedup(self):
        t = self._tensor()
        space = PolicySpace(leagues=[1, 2], teams=[1], vectors=[8, 32])
        baseline = PolicyParams(1, 1, 32)
        result = grid_search(
            t, self._options(), space, baseline, reps=1, worker_budget=1
        )
        # 4 policies x 3 modes, phi target only
        assert len(result.entries) == 4 * t.order
        assert result.skipped == []
        base_rows = [
            e for e in result.entries
            if (e.league_size, e.team_size, e.vector_size) == (1, 1, 32)
        ]
        assert len(base_rows) == t.order
        for e in base_rows:
            assert e.speedup == 1.0

    def test_skipped_rows_reported(self):
        t = self._tensor()
        space = PolicySpace(leagues=[1], teams=[64], vectors=[32])
        result = grid_search(
            t, self._options(), space, default_policy(), reps=1, worker_budget=1
        )
        assert result.skipped == [(1, 64, 32)]
        # baseline was injected, so it still produced rows
        assert len(result.entries) == t.order

    def test_full_target_rows(self):
        t = self._tensor()
        space = PolicySpace(leagues=[1], teams=[1], vectors=[32])
        result = grid_search(
            t, self._options(), space, default_policy(),
            reps=1, targets=("phi", "full"), worker_budget=1,
        )
        full_rows = [e for e in result.entries if e.target == "full"]
        assert len(full_rows) == 1
        assert full_rows[0].mode == -1
        assert full_rows[0].speedup == 1.0

    def test_invalid_baseline_rejected(self):
        t = self._tensor()
        space = PolicySpace(leagues=[1], teams=[1], vectors=[1])
        with pytest.raises(ValueError):
            grid_search(t, self._options(), space, (1, 64, 32), reps=1)

    def test_bad_target_rejected(self):
        t = self._tensor()
        space = PolicySpace(leagues=[1], teams=[1], vectors=[1])
        with pytest.raises(ValueError, match="target"):
            grid_search(
                t, self._options(), space, default_policy(),
                reps=1, targets=("warp",),
            )

    def test_csv_and_best(self):
        t = self._tensor()
        space = PolicySpace(leagues=[1], teams=[1, 64], vectors=[8, 32])
        result = grid_search(
            t, self._options(), space, PolicyParams(1, 1, 8),
            reps=1, worker_budget=1,
        )
        buf = io.StringIO()
        result.to_csv(buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == "league,team,vector,valid,target,mode,mean_ms,speedup"
        assert any(line.endswith("skipped,-1,nan,nan") for line in lines[1:])
        best = result.best(target="phi", mode=0)
        assert best.valid
        expected = max(
            e.speedup for e in result.entries
            if e.target == "phi" and e.mode == 0
        )
        assert best.speedup == expected

    def test_heatmap_blocks(self):
        t = self._tensor()
        space = PolicySpace(leagues=[1, 2], teams=[1, 2], vectors=[4])
        result = grid_search(
            t, self._options(), space, PolicyParams(1, 1, 4),
            reps=1, worker_budget=1,
        )
        text = format_heatmaps(result, target="phi", mode=0)
        blocks = text.strip().split("\n\n")
        assert len(blocks) == 2
        for block in blocks:
            lines = block.split("\n")
            assert lines[0].startswith("# league")
            # three comment lines, then one matrix row per team size
            assert len(lines) == 5
            assert all(len(row.split()) == 1 for row in lines[3:])
