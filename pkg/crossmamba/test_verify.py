import pytest

from .bench import BENCH_COLUMNS, bench, rows_to_csv
from .exception import UsageError
from .verify import CHECKS, FAST, verify_suite


class TestVerifySuite:
    def test_fast_level_passes(self):
        report = verify_suite(FAST, seed=0)
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        assert failed == []
        assert report["total"] == len(CHECKS)
        assert report["passed"]

    def test_registered_checks(self):
        for name in (
            "scan_duality",
            "xqssm_oracle",
            "merge_oracle",
            "geometry_rig",
            "scale_sweep",
            "tensor_format_guard",
        ):
            assert name in CHECKS

    @pytest.mark.parametrize(
        "name",
        [
            "discretize_monotone",
            "hydra_reversal",
            "zero_readout_skip",
            "scan_duality_float32",
            "geometry_scaling",
            "hits_bounded",
            "traversal_inverse",
            "snake_even_rows",
            "merge_precedence",
            "xqssm_causality",
            "xqssm_memory",
            "layer_zero_hits",
            "after_conv_identity",
            "layer_zero_flags",
            "estimator_monotone",
            "ratio_growth",
            "deformable_oracle",
            "naive_mamba_oracle",
            "scene_round_trip",
            "byte_determinism",
        ],
    )
    def test_property_check_passes_on_other_seed(self, name):
        result = CHECKS[name](FAST, 7)
        assert result.passed, (result.max_error, result.detail)
        assert result.instances > 0

    def test_memory_check_reports_peaks(self):
        result = CHECKS["xqssm_memory"](FAST, 0)
        assert result.detail.count("L=") == 3
        assert 0.0 < result.max_error <= 1.1

    def test_single_check(self):
        result = CHECKS["merge_oracle"](FAST, 3)
        assert result.passed
        assert result.instances == 100

    def test_unknown_level(self):
        with pytest.raises(UsageError):
            verify_suite("slow")


class TestBench:
    def test_counted_flops_match(self):
        rows = bench(sizes=(16, 24), queries=4, seed=1)
        assert [row["V"] for row in rows] == [16, 24]
        assert all(row["counted_flops"] == row["kernel_flops"] for row in rows)
        assert all(row["analytic_flops"] < row["kernel_flops"] for row in rows)

    def test_no_feature_tokens(self):
        (row,) = bench(sizes=(0,), queries=3, seed=2)
        assert row["V"] == 0
        assert row["counted_flops"] == row["kernel_flops"]

    def test_csv(self):
        rows = bench(sizes=(8,), queries=2)
        header = rows_to_csv(rows).splitlines()[0]
        assert header == ",".join(BENCH_COLUMNS)
