import numpy as np
import pytest

from .config import NUMERICS, NumericsConfig, SSMDims
from .exception import (
    EXIT_IO,
    EXIT_USAGE,
    ConfigError,
    CrossMambaException,
    InvalidInputError,
    NumericError,
    SceneIOError,
    ShapeError,
)
from .rng import STREAM_RIG, STREAM_VALUES, SeededStream
from .utils import check_finite, check_shape, inverse_softplus, softplus


class TestRecords:
    def test_dims_properties(self):
        dims = SSMDims(model_dim=4, expand=2.0, heads=4, head_dim=2, groups=2)
        assert dims.inner_dim == 8
        assert dims.bc_dim == 64
        assert dims.head_group.tolist() == [0, 0, 1, 1]

    def test_dims_round_trip(self):
        dims = SSMDims(model_dim=4, expand=2.0, heads=2, head_dim=4, state_dim=3)
        assert SSMDims.from_dict(dims.as_dict()) == dims

    @pytest.mark.parametrize(
        "data,path",
        [
            ({"heads": 3}, "expand"),
            ({"groups": 3}, "groups"),
            ({"state_dim": 0}, "state_dim"),
            ({"state": 2}, "state"),
        ],
    )
    def test_dims_errors(self, data, path):
        with pytest.raises(ConfigError) as exc:
            SSMDims.from_dict(data)
        assert exc.value.path == path

    @pytest.mark.parametrize(
        "kwargs,path", [({"heads": 0}, "heads"), ({"state": 2}, "state")]
    )
    def test_constructor_errors(self, kwargs, path):
        with pytest.raises(ConfigError) as exc:
            SSMDims(**kwargs)
        assert exc.value.path == path

    def test_not_an_object(self):
        with pytest.raises(ConfigError) as exc:
            SSMDims.from_dict([1, 2])
        assert exc.value.path == "<root>"

    def test_numerics_defaults(self):
        assert NUMERICS == NumericsConfig()
        assert NUMERICS.homogeneous_eps == 1e-5


class TestSeededStream:
    def test_reproducible(self):
        a = SeededStream(42, STREAM_VALUES).normal((5, 3))
        b = SeededStream(42, STREAM_VALUES).normal((5, 3))
        assert np.array_equal(a, b)

    def test_streams_are_independent(self):
        a = SeededStream(42, STREAM_VALUES).uniform((8,))
        b = SeededStream(42, STREAM_RIG).uniform((8,))
        assert not np.array_equal(a, b)

    def test_children_differ(self):
        parent = SeededStream(7)
        assert not np.array_equal(
            parent.child(0).uniform((4,)), parent.child(1).uniform((4,))
        )

    def test_ranges(self):
        stream = SeededStream(3)
        u = stream.uniform((1000,), -2.0, 3.0)
        assert u.min() >= -2.0 and u.max() < 3.0
        k = stream.integers(2, 5, (1000,))
        assert set(k.tolist()) == {2, 3, 4}

    def test_normal_moments(self):
        sample = SeededStream(11).normal((20000,), scale=2.0)
        assert abs(sample.mean()) < 0.1
        assert abs(sample.std() - 2.0) < 0.1

    def test_odd_count(self):
        assert SeededStream(0).normal((3,)).shape == (3,)

    def test_rejects_negative_seed(self):
        with pytest.raises(InvalidInputError) as exc:
            SeededStream(-1)
        assert exc.value.kwargs["name"] == "seed"

    def test_rejects_seed_past_64_bits(self):
        with pytest.raises(InvalidInputError):
            SeededStream(2**64)


class TestExceptions:
    def test_message_format(self):
        exc = ShapeError(name="x", expected=(2,), actual=(3,))
        assert str(exc) == "Shape mismatch for x: expected (2,), got (3,)"
        assert exc.exit_code == EXIT_USAGE

    def test_as_dict(self):
        exc = SceneIOError(path="/tmp/x", reason="denied")
        assert exc.as_dict() == {
            "error": "SceneIOError",
            "message": "I/O failure on /tmp/x: denied",
            "exit_code": EXIT_IO,
        }

    def test_missing_kwargs_fall_back(self):
        assert str(ConfigError(reason="oops")) == ConfigError._msg_fmt

    def test_explicit_message(self):
        assert str(CrossMambaException("plain")) == "plain"

    def test_numeric_stage(self):
        with pytest.raises(NumericError) as exc:
            check_finite(np.array([1.0, np.inf]), "gate")
        assert exc.value.stage == "gate"


class TestUtils:
    def test_inverse_softplus(self):
        values = np.array([1e-3, 0.5, 1.0, 7.0])
        assert np.allclose(softplus(inverse_softplus(values)), values)

    def test_check_shape_wildcards(self):
        array = np.zeros((2, 3))
        assert check_shape(array, (None, 3), "a") is array
        with pytest.raises(ShapeError):
            check_shape(array, (2, 3, 1), "a")
