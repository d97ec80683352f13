import io
from fractions import Fraction

import numpy as np
import pytest

from cpaprkit import (
    BandwidthResult,
    STREAM_KERNELS,
    MachineSpec,
    run_stream,
    stream_to_csv,
)
from cpaprkit.kernels import stream_ops
from cpaprkit.stream import expected_value

TABLE = {
    "copy": (16, 0, "0"),
    "scale": (16, 1, "0.0625"),
    "add": (24, 1, "0.042"),
    "triad": (24, 2, "0.083"),
}


class TestKernelTable:
    def test_bytes_flops_and_intensity_text(self):
        assert len(STREAM_KERNELS) == 4
        for k in STREAM_KERNELS:
            nbytes, flops, text = TABLE[k.name]
            assert k.bytes_per_iter == nbytes
            assert k.flops_per_iter == flops
            assert k.intensity_text == text

    def test_exact_intensities(self):
        by_name = {k.name: k for k in STREAM_KERNELS}
        assert by_name["copy"].intensity == 0
        assert by_name["scale"].intensity == Fraction(1, 16)
        assert by_name["add"].intensity == Fraction(1, 24)
        assert by_name["triad"].intensity == Fraction(2, 24)

    def test_expected_values(self):
        assert expected_value("copy", 3.0) == 2.0
        assert expected_value("scale", 3.0) == 6.0
        assert expected_value("add", 3.0) == 3.0
        assert expected_value("triad", 3.0) == 5.0
        with pytest.raises(ValueError):
            expected_value("swap", 3.0)

    def test_triad_with_zero_scale_is_copy(self):
        assert expected_value("triad", 0.0) == expected_value("copy", 0.0)


class TestKernelBodies:
    @pytest.mark.parametrize("backend", ["numpy", "numba"])
    def test_contents_after_each_kernel(self, backend):
        table = stream_ops(backend)
        n = 1000
        b = np.full(n, 2.0)
        c = np.full(n, 1.0)
        for name, fn in table.items():
            a = np.zeros(n)
            fn(a, b, c, 3.0)
            assert (a == expected_value(name, 3.0)).all()
            # sources untouched
            assert (b == 2.0).all() and (c == 1.0).all()

    def test_idempotent_across_reps(self):
        table = stream_ops("numpy")
        n = 100
        a, b, c = np.zeros(n), np.full(n, 2.0), np.full(n, 1.0)
        for _ in range(5):
            table["triad"](a, b, c, 3.0)
        assert (a == 5.0).all()


class TestRunStream:
    def test_all_kernels_validate(self):
        results = run_stream(length=50_000, reps=3, backend="numpy")
        assert [r.kernel for r in results] == ["copy", "scale", "add", "triad"]
        for r in results:
            assert r.validated
            assert r.best_gbs > 0
            assert r.best_gbs >= r.mean_gbs
            assert len(r.seconds) == 2  # first rep discarded

    def test_kernel_subset_and_order(self):
        results = run_stream(
            length=10_000, reps=2, kernels=["triad", "copy"], backend="numpy"
        )
        assert [r.kernel for r in results] == ["triad", "copy"]

    def test_reps_must_allow_warmup_discard(self):
        with pytest.raises(ValueError, match="reps"):
            run_stream(length=100, reps=1)

    def test_bad_length(self):
        with pytest.raises(ValueError, match="length"):
            run_stream(length=0, reps=2)

    def test_unknown_kernel(self):
        with pytest.raises(ValueError, match="unknown stream kernel"):
            run_stream(length=100, reps=2, kernels=["swap"])

    def test_custom_scale_validates(self):
        results = run_stream(
            length=5_000, reps=2, kernels=["scale", "triad"],
            backend="numpy", scale=-1.5,
        )
        assert all(r.validated for r in results)

    def test_percent_of_peak(self):
        machine = MachineSpec(
            name="m", clock_ghz=1, cores_per_socket=1, ops_per_cycle=1,
            sockets=1, bandwidth_gbs=100,
        )
        r = BandwidthResult(
            kernel="copy", length=1, reps=2, bytes_per_iter=16, best_gbs=25.0
        )
        assert r.percent_of_peak(machine) == 25.0


class TestCsv:
    def test_table_intensities_in_output(self):
        results = run_stream(length=10_000, reps=2, backend="numpy")
        buf = io.StringIO()
        stream_to_csv(results, buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == (
            "kernel,length,bytes_per_iter,intensity,best_gbs,mean_gbs,validated"
        )
        cells = [line.split(",") for line in lines[1:]]
        assert [c[3] for c in cells] == ["0", "0.0625", "0.042", "0.083"]
        assert all(c[6] == "1" for c in cells)

    def test_percent_column_with_machine(self):
        results = run_stream(length=10_000, reps=2, backend="numpy")
        machine = MachineSpec(
            name="m", clock_ghz=1, cores_per_socket=1, ops_per_cycle=1,
            sockets=1, bandwidth_gbs=1000,
        )
        buf = io.StringIO()
        stream_to_csv(results, buf, machine=machine)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0].endswith(",percent_of_peak")
        assert all(len(line.split(",")) == 8 for line in lines[1:])
