import numpy as np
import pytest

from .bench import BENCH_DIMS, traced_peak
from .config import SSMDims
from .exception import ConfigError, InvalidInputError, ShapeError
from .instances import (
    SMALL_DIMS,
    random_batch,
    random_mask,
    random_params,
    verify_stream,
)
from .ssm import scan_recurrent
from .test_ssm import SCALAR, scalar_batch, scalar_params
from .xqssm import (
    FlopCounter,
    ParallelXQSSM,
    RecurrentXQSSM,
    XQSSMInput,
    backend_trait,
    load_backend,
    recurrent_kernel_flops,
    xqssm_flops,
)
from .xqssm.parallel import direction_mixer
from .xqssm.recurrent import masked_direction_scan

DIMS = SSMDims(**SMALL_DIMS)


def random_input(seed, L, M, dims=DIMS):
    stream = verify_stream(seed)
    inp = XQSSMInput.from_directions(
        random_batch(stream, dims, L),
        random_batch(stream, dims, L),
        random_mask(stream, L, M),
    )
    return inp, random_params(stream, dims.heads), random_params(stream, dims.heads)


def pinned_scan_reference(inp, fwd, bwd, dims):
    # Generic scan with Δ forced to zero on query rows, read at query rows.
    total = 0.0
    for index, params in ((0, fwd), (1, bwd)):
        mask = inp.mask(index)
        y, _ = scan_recurrent(
            inp.direction(index), params.without_skip(), dims, pin_zero=~mask
        )
        total = total + (y[~mask] if index == 0 else y[~mask][::-1])
    return total


class TestMaskedDirectionScan:
    def test_query_after_two_values(self):
        x = 1 / np.log(2)
        seq = scalar_batch(x=[x, x, 5.0], B=[1, 1, 1], C=[0, 0, 1], dt=[0, 0, 9.0])
        y = masked_direction_scan(seq, [True, True, False], scalar_params(), SCALAR)
        assert y.shape == (1, 1, 1)
        assert y[0, 0, 0] == pytest.approx(1.5, abs=1e-12)

    def test_leading_query_reads_zero(self):
        seq = scalar_batch(x=[1, 1], B=[1, 1], C=[1, 1], dt=[0, 0])
        y = masked_direction_scan(seq, [False, True], scalar_params(), SCALAR)
        assert y[0, 0, 0] == 0.0

    def test_queries_do_not_touch_state(self):
        inp, fwd, _ = random_input(1, 20, 6)
        seq, mask = inp.direction(0), inp.mask(0)
        y = masked_direction_scan(seq, mask, fwd, DIMS)
        noisy = seq.x.copy()
        noisy[~mask] = 1e6
        seq_noisy = type(seq)(noisy, seq.B_in, seq.C_in, seq.dt)
        assert np.array_equal(masked_direction_scan(seq_noisy, mask, fwd, DIMS), y)


class TestCausality:
    @pytest.mark.parametrize("index", [0, 1])
    def test_later_values_do_not_reach_earlier_queries(self, index):
        inp, fwd, _ = random_input(13, 40, 8)
        seq, mask = inp.direction(index), inp.mask(index)
        y = masked_direction_scan(seq, mask, fwd, DIMS)
        queries = np.flatnonzero(~mask)
        k = len(queries) // 2
        later = (np.arange(seq.length) > queries[k]) & mask
        noisy = type(seq)(
            np.where(later[:, None], seq.x + 10.0, seq.x),
            np.where(later[:, None], -seq.B_in, seq.B_in),
            seq.C_in,
            np.where(later[:, None], seq.dt + 1.0, seq.dt),
        )
        y_noisy = masked_direction_scan(noisy, mask, fwd, DIMS)
        assert np.array_equal(y_noisy[: k + 1], y[: k + 1])


class TestMemory:
    def test_peak_does_not_grow_with_length(self):
        dims = SSMDims(**BENCH_DIMS)
        backend = RecurrentXQSSM()
        peaks = []
        for L in (64, 256, 1024):
            inp, fwd, bwd = random_input(12, L, 8, dims)
            peaks.append(traced_peak(lambda: backend(inp, fwd, bwd, dims=dims)))
        assert max(peaks) <= 1.1 * peaks[0]


class TestBackends:
    @pytest.mark.parametrize("backend", [RecurrentXQSSM, ParallelXQSSM])
    def test_all_queries_give_zero(self, backend):
        stream = verify_stream(2)
        seq = random_batch(stream, DIMS, 5)
        inp = XQSSMInput.from_stream(seq, np.zeros(5, dtype=bool))
        y = backend()(inp, random_params(stream, DIMS.heads), dims=DIMS)
        assert y.shape == (5, DIMS.inner_dim)
        assert np.all(y == 0.0)

    @pytest.mark.parametrize("backend", [RecurrentXQSSM, ParallelXQSSM])
    def test_no_queries(self, backend):
        inp, fwd, bwd = random_input(3, 8, 0)
        assert backend()(inp, fwd, bwd, dims=DIMS).shape == (0, DIMS.inner_dim)

    def test_parallel_matches_recurrent(self):
        for seed in range(5):
            inp, fwd, bwd = random_input(seed, 48, 8)
            y_rec = RecurrentXQSSM()(inp, fwd, bwd, dims=DIMS)
            y_par = ParallelXQSSM()(inp, fwd, bwd, dims=DIMS)
            assert np.max(np.abs(y_par - y_rec)) < 1e-10

    def test_matches_pinned_generic_scan(self):
        inp, fwd, bwd = random_input(11, 48, 8)
        y = RecurrentXQSSM()(inp, fwd, bwd, dims=DIMS)
        assert np.max(np.abs(y - pinned_scan_reference(inp, fwd, bwd, DIMS))) < 1e-10

    def test_grouped_heads(self):
        dims = SSMDims(
            model_dim=4, expand=2.0, heads=4, head_dim=2, state_dim=3, groups=2
        )
        inp, fwd, bwd = random_input(5, 24, 5, dims)
        y_rec = RecurrentXQSSM()(inp, fwd, bwd, dims=dims)
        y_par = ParallelXQSSM()(inp, fwd, bwd, dims=dims)
        assert np.max(np.abs(y_par - y_rec)) < 1e-10

    def test_requires_dims(self):
        inp, fwd, bwd = random_input(0, 4, 1)
        with pytest.raises(ShapeError):
            RecurrentXQSSM()(inp, fwd, bwd)

    def test_mask_length_mismatch(self):
        seq = random_batch(verify_stream(0), DIMS, 4)
        with pytest.raises(ShapeError):
            XQSSMInput.from_stream(seq, [True, False])


class TestParallelMixer:
    def test_shape(self):
        inp, fwd, bwd = random_input(4, 30, 7)
        mixer = ParallelXQSSM().materialize(inp, fwd, bwd, DIMS)
        assert mixer.shape == (7, 23, 2 * DIMS.heads)

    def test_forward_mixer_is_causal(self):
        inp, fwd, _ = random_input(6, 30, 7)
        mask = inp.mask(0)
        mixer = direction_mixer(inp.direction(0), mask, fwd, DIMS)
        ahead = np.cumsum(mask)[~mask]
        for i, count in enumerate(ahead):
            assert np.all(mixer[i, count:] == 0.0)


class TestBackendRegistry:
    @pytest.mark.parametrize(
        "name,cls",
        [
            ("recurrent", RecurrentXQSSM),
            ("Parallel", ParallelXQSSM),
            ("crossmamba.xqssm.parallel.ParallelXQSSM", ParallelXQSSM),
            (RecurrentXQSSM, RecurrentXQSSM),
        ],
    )
    def test_load(self, name, cls):
        assert isinstance(load_backend(name), cls)

    def test_unknown(self):
        with pytest.raises(ConfigError) as exc:
            load_backend("no_such_backend")
        assert exc.value.path == "xqssm_backend"
        assert "parallel" in exc.value.kwargs["reason"]

    def test_registered_names(self):
        trait = backend_trait()
        assert {"parallel", "recurrent"} <= set(trait.registered_names())
        assert "Registered:" in trait.help


class TestFlops:
    def test_formula(self):
        flops = xqssm_flops(V=10, M=3, H=2, N=4, inner=8)
        assert flops.total == 1008
        assert flops.per_query == 56

    def test_value_only(self):
        assert xqssm_flops(10, 0, 2, 4, 8).total == 2 * 10 * (2 * 5 + 8 * 4)

    def test_query_only(self):
        assert xqssm_flops(0, 3, 2, 4, 8).total == 3 * 8 * (4 + 2 + 1)

    def test_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            xqssm_flops(-1, 0, 1, 1, 1)

    def test_kernel_formula(self):
        # 2V(4H + HN + 3αDN) + M(4αDN + αD)
        assert recurrent_kernel_flops(V=10, M=3, H=2, N=4, inner=8) == 2648

    def test_counter_matches_kernel_formula(self):
        inp, fwd, bwd = random_input(8, 40, 9)
        counter = FlopCounter.for_dims(DIMS)
        RecurrentXQSSM()(inp, fwd, bwd, dims=DIMS, counter=counter)
        shape = (31, 9, DIMS.heads, DIMS.state_dim, DIMS.inner_dim)
        assert counter.total == recurrent_kernel_flops(*shape)
        assert counter.as_dict()["total"] == counter.total
        assert counter.total > xqssm_flops(*shape).total

    def test_counter_events(self):
        counter = FlopCounter(heads=2, state_dim=4, inner=8)
        counter.value_token()
        counter.readout()
        counter.combine(1)
        assert counter.as_dict() == {
            "combine": 8,
            "decay": 32,
            "discretize": 8,
            "input_scale": 8,
            "readout": 64,
            "state_update": 64,
            "total": 184,
        }
