import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actfn import tensor as T
from actfn.activations import (
    MAF_SWEEP,
    NAMED_KINDS,
    REFERENCE_PROPERTIES,
    ActivationSpec,
    act_backward,
    act_forward,
    check_properties,
    expected_properties,
    parse_activation,
    symmetric_grid,
)
from actfn.errors import NonFiniteError, ShapeError

GRID = np.linspace(-10, 10, 20_001)
ALL_SPECS = [ActivationSpec(k) for k in NAMED_KINDS] + [ActivationSpec("maf", a) for a in MAF_SWEEP]


def f(name, x):
    return act_forward(parse_activation(name), np.asarray(x, dtype=float))


class TestForward:
    def test_relu(self):
        assert f("relu", -1.0) == 0.0 and f("relu", 2.0) == 2.0

    def test_zero_cases(self):
        assert f("sigmoid", 0.0) == 0.5
        assert f("tanh", 0.0) == 0.0
        assert f("swish", 0.0) == 0.0

    def test_elu_limit(self):
        assert f("elu", -20.0) == pytest.approx(np.exp(-20) - 1, rel=1e-15)

    def test_square(self):
        assert f("square", -2.0) == 4.0

    def test_maf_identities_exact(self):
        absv, relu = f("abs", GRID), f("relu", GRID)
        assert f("maf:-1", GRID).tobytes() == absv.tobytes()
        assert f("maf:0", GRID).tobytes() == relu.tobytes()

    def test_maf_negative_side(self):
        assert f("maf:2", -1.0) == -2.0
        assert f("maf:-2", -1.5) == 3.0

    def test_stable_at_extremes(self):
        x = np.array([-700.0, 700.0])
        for name in ("sigmoid", "tanh", "swish"):
            assert np.all(np.isfinite(f(name, x)))
        np.testing.assert_array_equal(f("sigmoid", x), [np.exp(-700) / (1 + np.exp(-700)), 1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteError):
            f("relu", [np.nan])
        with pytest.raises(NonFiniteError):
            act_forward(ActivationSpec("tanh"), T.Tensor([np.inf]))

    def test_tensor_path_matches_array_path(self, rng):
        x = rng.standard_normal(50)
        for spec in ALL_SPECS:
            np.testing.assert_array_equal(act_forward(spec, T.Tensor(x)).data, act_forward(spec, x))


class TestBackward:
    def test_tanh_at_zero(self):
        assert act_backward(ActivationSpec("tanh"), np.array(0.0), np.array(1.0)) == 1.0

    def test_square_at_three(self):
        assert act_backward(ActivationSpec("square"), np.array(3.0), np.array(1.0)) == 6.0

    def test_positive_branch_at_kink(self):
        zero, one = np.array(0.0), np.array(1.0)
        assert act_backward(ActivationSpec("relu"), zero, one) == 1.0
        assert act_backward(ActivationSpec("abs"), zero, one) == 1.0
        assert act_backward(ActivationSpec("maf", -2.0), zero, one) == 1.0

    def test_maf_slopes(self):
        g = act_backward(ActivationSpec("maf", 2.0), np.array([-3.0, 3.0]), np.ones(2))
        assert g.tolist() == [2.0, 1.0]

    def test_swish_closed_form(self, rng):
        x = rng.standard_normal(100)
        s = 1 / (1 + np.exp(-x))
        np.testing.assert_allclose(act_backward(ActivationSpec("swish"), x, np.ones_like(x)), s + x * s * (1 - s), rtol=1e-14)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
    def test_against_finite_difference(self, spec, rng):
        x = rng.normal(0, 4, 10_000)
        x = x[np.abs(x) >= 1e-6]
        h = 1e-5 * np.maximum(1, np.abs(x))
        if spec.kinked:
            h = np.minimum(h, np.abs(x) / 2)
        numeric = (act_forward(spec, x + h) - act_forward(spec, x - h)) / (2 * h)
        analytic = act_backward(spec, x, np.ones_like(x))
        err = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
        assert err.max() < 1e-6

    def test_upstream_scaling(self, rng):
        x, up = rng.standard_normal(10), rng.standard_normal(10)
        spec = ActivationSpec("elu", 0.5)
        np.testing.assert_allclose(act_backward(spec, x, up), up * act_backward(spec, x, np.ones(10)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            act_backward(ActivationSpec("relu"), np.zeros(3), np.zeros(4))


class TestSpecAndRegistry:
    @pytest.mark.parametrize("name", ["relu", "elu", "swish", "sigmoid", "tanh", "square", "abs"])
    def test_names_roundtrip(self, name):
        assert parse_activation(name).name == name

    def test_maf_parse(self):
        spec = parse_activation("maf:-1")
        assert spec.kind == "maf" and spec.alpha == -1.0 and spec.name == "maf:-1"

    @pytest.mark.parametrize("bad", ["ReLU", "maf", "maf:x", "tanh:2", "leaky"])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_activation(bad)

    def test_elu_default_alpha_and_positivity(self):
        assert ActivationSpec("elu").alpha == 1.0
        with pytest.raises(ValueError):
            ActivationSpec("elu", 0.0)

    def test_parametric_flags(self):
        assert ActivationSpec("elu").parametric and ActivationSpec("maf", 0.0).parametric
        assert not ActivationSpec("relu").parametric


class TestInvariants:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50))
    def test_even_symmetry_exact(self, x):
        for name in ("square", "abs"):
            assert f(name, x) == f(name, -x)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50))
    def test_tanh_odd(self, x):
        assert abs(f("tanh", -x) + f("tanh", x)) <= 1e-12

    # strictness holds until float64 rounds the output onto the bound (|x| ~ 18.7 for tanh, x ~ 36.7 for sigmoid)
    @settings(max_examples=200, deadline=None)
    @given(st.floats(-700, 36))
    def test_sigmoid_strictly_inside_unit_interval(self, x):
        assert 0 < f("sigmoid", x) < 1

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-18.5, 18.5))
    def test_tanh_strictly_inside(self, x):
        assert -1 < f("tanh", x) < 1

    @pytest.mark.parametrize("name", ["relu", "elu", "sigmoid", "tanh"])
    def test_monotone_where_tabulated(self, name):
        assert REFERENCE_PROPERTIES[name].monotonic
        assert np.all(np.diff(f(name, GRID)) >= 0)

    @pytest.mark.parametrize("name", ["swish", "square"])
    def test_monotonicity_violated(self, name):
        assert np.any(np.diff(f(name, GRID)) < 0)

    def test_absolute_is_not_monotone_despite_table(self):
        # the reference table marks Absolute monotonic; |x| decreases on x < 0
        assert REFERENCE_PROPERTIES["abs"].monotonic
        assert f("abs", -1.0) > f("abs", 0.0) < f("abs", 1.0)


class TestCheckProperties:
    @pytest.mark.parametrize("name", ["relu", "elu", "swish", "sigmoid", "tanh", "square"])
    def test_matches_table(self, name):
        assert check_properties(ActivationSpec(name)) == REFERENCE_PROPERTIES[name]

    def test_absolute_other_columns(self):
        got, want = check_properties(ActivationSpec("abs")), REFERENCE_PROPERTIES["abs"]
        for field in ("parametric", "smooth", "bounded", "symmetric"):
            assert getattr(got, field) == getattr(want, field)

    def test_tanh_row(self):
        p = check_properties(ActivationSpec("tanh"))
        assert (p.monotonic, p.smooth, p.bounded, p.symmetric) == (True, True, True, True)

    def test_square_row(self):
        p = check_properties(ActivationSpec("square"))
        assert (p.monotonic, p.smooth, p.bounded, p.symmetric) == (False, True, False, True)

    def test_maf_two_not_symmetric(self):
        assert not check_properties(ActivationSpec("maf", 2.0)).symmetric

    def test_maf_minus_one_symmetric(self):
        assert check_properties(ActivationSpec("maf", -1.0)).symmetric

    def test_expected_for_maf_is_none(self):
        assert expected_properties(ActivationSpec("maf", 0.0)) is None

    def test_grid(self):
        g = symmetric_grid()
        assert g.size >= 10_000 and 0.0 in g and np.array_equal(g, -g[::-1])

    @pytest.mark.parametrize(
        "grid",
        [np.linspace(0, 20, 20_000), np.linspace(-20, 20, 100), np.linspace(-5, 5, 20_001), np.zeros(20_000)],
        ids=["asymmetric", "sparse", "narrow", "degenerate"],
    )
    def test_bad_grids(self, grid):
        with pytest.raises(ValueError):
            check_properties(ActivationSpec("relu"), grid)
