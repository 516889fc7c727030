import numpy as np
import pytest

from .config import SSMDims
from .exception import InvalidInputError, ShapeError
from .instances import SMALL_DIMS, random_batch, random_params, verify_stream
from .rng import SeededStream
from .ssm import (
    SSMParams,
    ScanState,
    SequenceBatch,
    discretize,
    hydra_bidirectional,
    hydra_skip,
    init_ssm_params,
    materialize_mixer,
    scan_matrix_mixer,
    scan_recurrent,
    zoh_input_matrix,
)
from .utils import inverse_softplus

SCALAR = SSMDims(model_dim=1, expand=1.0, heads=1, head_dim=1, state_dim=1)


def scalar_params(A_log=0.0, dt_bias=0.0, skip=0.0):
    return SSMParams(
        A_log=np.array([A_log]), dt_bias=np.array([dt_bias]), skip_D=np.array([skip])
    )


def _column(values):
    return np.asarray(values, dtype=np.float64).reshape(-1, 1)


def scalar_batch(x, B, C, dt):
    return SequenceBatch(_column(x), _column(B), _column(C), _column(dt))


def half_decay_batch():
    # A = -1 and dt = 0 give Δ = ln 2, so dA = 0.5 and Δ·B·x = 1.
    return scalar_batch(x=[1 / np.log(2)] * 2, B=[1, 1], C=[1, 1], dt=[0, 0])


class TestDiscretize:
    def test_softplus_of_zero(self):
        delta, dA = discretize(np.zeros((1, 1)), scalar_params())
        assert delta[0, 0] == pytest.approx(np.log(2))
        assert dA[0, 0] == pytest.approx(0.5)

    def test_decay_in_unit_interval_and_monotone(self):
        params = random_params(verify_stream(0), 4)
        dt = np.linspace(-8, 8, 33)[:, None].repeat(4, axis=1)
        _, dA = discretize(dt, params)
        assert np.all((dA > 0) & (dA <= 1))
        assert np.all(np.diff(dA, axis=0) < 0)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            discretize(np.array([[np.nan]]), scalar_params())

    def test_a_is_negative(self):
        params = SSMParams(
            A_log=np.array([-3.0, 0.0, 5.0]), dt_bias=np.zeros(3), skip_D=np.zeros(3)
        )
        assert np.all(params.A < 0)

    def test_init_ranges(self):
        params = init_ssm_params(64, SeededStream(3), dt_min=1e-3, dt_max=1e-1)
        assert np.all((params.A_log >= 0.0) & (params.A_log <= np.log(16.0)))
        assert np.all((params.A >= -16.0) & (params.A <= -1.0))
        delta, _ = discretize(np.zeros((1, 64)), params)
        assert np.all((delta > 1e-3 - 1e-12) & (delta < 1e-1 + 1e-12))

    def test_zoh_matches_euler_for_small_steps(self):
        delta = np.array([1e-6])
        A = np.array([-2.0])
        B = np.array([[3.0]])
        assert zoh_input_matrix(delta, A, B) == pytest.approx(delta[:, None] * B)

    def test_zoh_closed_form(self):
        delta, A, B = np.array([0.5]), np.array([-1.0]), np.array([[2.0]])
        expected = (np.exp(-0.5) - 1.0) / -1.0 * 2.0
        assert zoh_input_matrix(delta, A, B)[0, 0] == pytest.approx(expected)


class TestScanRecurrent:
    def test_half_decay_recurrence(self):
        y, final = scan_recurrent(half_decay_batch(), scalar_params(), SCALAR)
        assert y[:, 0] == pytest.approx([1.0, 1.5])
        assert final.h.reshape(-1) == pytest.approx([1.5])

    def test_pinned_rows_keep_init(self):
        seq = scalar_batch(x=[2.0, 3.0], B=[1, 1], C=[2.0, 0.5], dt=[0, 0])
        init = ScanState(np.full((1, 1, 1), 4.0))
        params = scalar_params(skip=0.25)
        y, final = scan_recurrent(seq, params, SCALAR, init, pin_zero=[True, True])
        assert y[:, 0] == pytest.approx([2.0 * 4.0 + 0.5, 0.5 * 4.0 + 0.75])
        assert np.array_equal(final.h, init.h)

    def test_empty_sequence(self):
        dims = SSMDims(**SMALL_DIMS)
        init = ScanState(np.ones((dims.heads, dims.head_dim, dims.state_dim)))
        seq = random_batch(verify_stream(1), dims, 0)
        y, final = scan_recurrent(seq, random_params(verify_stream(1), 2), dims, init)
        assert y.shape == (0, dims.inner_dim)
        assert np.array_equal(final.h, init.h)

    def test_chaining_matches_single_pass(self):
        dims = SSMDims(**SMALL_DIMS)
        stream = verify_stream(2)
        seq = random_batch(stream, dims, 20)
        params = random_params(stream, dims.heads)
        y_all, h_all = scan_recurrent(seq, params, dims)
        y_a, h_a = scan_recurrent(seq.slice(0, 7), params, dims)
        y_b, h_b = scan_recurrent(seq.slice(7, 20), params, dims, init=h_a)
        assert np.allclose(np.concatenate([y_a, y_b]), y_all, rtol=0, atol=1e-12)
        assert np.allclose(h_b.h, h_all.h, rtol=0, atol=1e-12)

    def test_zero_c_leaves_skip(self):
        dims = SSMDims(**SMALL_DIMS)
        stream = verify_stream(3)
        seq = random_batch(stream, dims, 12)
        seq = SequenceBatch(seq.x, seq.B_in, np.zeros_like(seq.C_in), seq.dt)
        params = random_params(stream, dims.heads)
        y, _ = scan_recurrent(seq, params, dims)
        skip = np.repeat(params.skip_D, dims.head_dim)
        assert np.array_equal(y, skip[None, :] * seq.x)

    def test_shape_mismatch(self):
        dims = SSMDims(**SMALL_DIMS)
        seq = random_batch(verify_stream(4), dims, 5)
        bad = SequenceBatch(seq.x[:, :-1], seq.B_in, seq.C_in, seq.dt)
        with pytest.raises(ShapeError):
            scan_recurrent(bad, random_params(verify_stream(4), 2), dims)


class TestMatrixMixer:
    def test_matches_half_decay_example(self):
        y_rec, _ = scan_recurrent(half_decay_batch(), scalar_params(), SCALAR)
        y_mix = scan_matrix_mixer(half_decay_batch(), scalar_params(), SCALAR)
        assert y_mix[:, 0] == pytest.approx([1.0, 1.5])
        assert np.max(np.abs(y_rec - y_mix)) < 1e-12

    def test_unit_decay_is_prefix_sum(self):
        x = np.array([1.0, -2.0, 0.5, 4.0])
        dt = np.full(4, inverse_softplus(1.0))
        seq = scalar_batch(x=x, B=np.ones(4), C=np.ones(4), dt=dt)
        y = scan_matrix_mixer(seq, scalar_params(A_log=-50.0), SCALAR)
        assert y[:, 0] == pytest.approx(np.cumsum(x), abs=1e-12)

    def test_single_token(self):
        seq = scalar_batch(x=[2.0], B=[3.0], C=[0.5], dt=[0.0])
        y = scan_matrix_mixer(seq, scalar_params(skip=0.1), SCALAR)
        assert y[0, 0] == pytest.approx(0.5 * np.log(2) * 3.0 * 2.0 + 0.1 * 2.0)

    @pytest.mark.parametrize("L", [1, 17, 64, 100, 128])
    def test_duality(self, L):
        dims = SSMDims(**SMALL_DIMS)
        stream = verify_stream(10 + L)
        seq = random_batch(stream, dims, L)
        params = random_params(stream, dims.heads)
        y_rec, _ = scan_recurrent(seq, params, dims)
        assert np.max(np.abs(y_rec - scan_matrix_mixer(seq, params, dims))) < 1e-10

    @pytest.mark.parametrize("L", [17, 128])
    def test_duality_at_32_bits(self, L):
        dims = SSMDims(**SMALL_DIMS)
        stream = verify_stream(40 + L)
        seq = random_batch(stream, dims, L)
        params = random_params(stream, dims.heads)
        y_ref, _ = scan_recurrent(seq, params, dims)
        y_rec, final = scan_recurrent(seq, params, dims, dtype=np.float32)
        y_mix = scan_matrix_mixer(seq, params, dims, dtype=np.float32)
        assert y_rec.dtype == y_mix.dtype == final.h.dtype == np.float32
        scale = np.max(np.abs(y_ref))
        assert np.max(np.abs(y_rec - y_mix)) / scale < 1e-3
        assert np.max(np.abs(y_rec - y_ref)) / scale < 1e-3

    def test_duality_with_groups(self):
        dims = SSMDims(
            model_dim=4, expand=2.0, heads=4, head_dim=2, state_dim=3, groups=2
        )
        stream = verify_stream(30)
        seq = random_batch(stream, dims, 40)
        params = random_params(stream, dims.heads)
        y_rec, _ = scan_recurrent(seq, params, dims)
        assert np.max(np.abs(y_rec - scan_matrix_mixer(seq, params, dims))) < 1e-10

    def test_mixer_is_lower_triangular(self):
        dims = SSMDims(**SMALL_DIMS)
        stream = verify_stream(31)
        seq = random_batch(stream, dims, 9)
        mixer = materialize_mixer(seq, random_params(stream, 2), dims)
        assert mixer.shape == (2, 9, 9)
        assert np.all(np.triu(mixer, k=1) == 0)


class TestHydra:
    dims = SSMDims(**SMALL_DIMS)

    def case(self, seed, L):
        stream = verify_stream(seed)
        return (
            random_batch(stream, self.dims, L),
            random_params(stream, self.dims.heads),
            random_params(stream, self.dims.heads),
        )

    def test_single_token_is_skip(self):
        seq, fwd, _ = self.case(40, 1)
        y = hydra_bidirectional(seq, fwd, fwd, self.dims)
        assert np.array_equal(y, hydra_skip(fwd, fwd, self.dims)[None, :] * seq.x)

    def test_palindrome(self):
        seq, fwd, _ = self.case(41, 5)
        fields = (seq.x, seq.B_in, seq.C_in, seq.dt)
        pal = SequenceBatch(*(np.concatenate([a, a[-2::-1]]) for a in fields))
        y = hydra_bidirectional(pal, fwd, fwd, self.dims)
        assert np.allclose(y, y[::-1], atol=1e-12)

    def test_reversal_swaps_directions(self):
        seq, fwd, bwd = self.case(42, 11)
        y = hydra_bidirectional(seq, fwd, bwd, self.dims)
        y_rev = hydra_bidirectional(seq.reversed(), bwd, fwd, self.dims)
        assert np.allclose(y_rev, y[::-1], atol=1e-12)

    def test_matches_dense_quasiseparable_mixer(self):
        L = 16
        seq, fwd, bwd = self.case(43, L)
        lower = materialize_mixer(seq, fwd.without_skip(), self.dims)
        upper = materialize_mixer(seq.reversed(), bwd.without_skip(), self.dims)
        dense = np.zeros((self.dims.heads, L, L))
        for i in range(L):
            for j in range(L):
                if j < i:
                    dense[:, i, j] = lower[:, i - 1, j]
                elif j > i:
                    dense[:, i, j] = upper[:, L - 2 - i, L - 1 - j]
                else:
                    dense[:, i, j] = 0.5 * (fwd.skip_D + bwd.skip_D)
        x = seq.x.reshape(L, self.dims.heads, self.dims.head_dim)
        expected = np.einsum("hij,jhp->ihp", dense, x).reshape(L, -1)
        y = hydra_bidirectional(seq, fwd, bwd, self.dims)
        assert np.max(np.abs(y - expected)) < 1e-10
