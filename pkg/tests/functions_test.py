import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ranking_opt.common import ConfigurationError
from ranking_opt.functions import (
    _OBJECTIVES,
    HOTS_NORMALIZATIONS,
    PERRON_NORMALIZATIONS,
    FunctionSpec,
    L1Normalization,
    Linear,
    LseNormalization,
    MeanZeroNormalization,
    add_objective,
    check_gradient,
    get_normalization,
    get_objective,
    get_supported_normalizations,
    get_supported_objectives,
)
from ranking_opt.testing import BaseTestClass

positive_vectors = arrays(np.float64, 5, elements=st.floats(0.05, 10.0))
real_vectors = arrays(np.float64, 5, elements=st.floats(-5.0, 5.0))
scales = st.floats(0.1, 10.0)
shifts = st.floats(-5.0, 5.0)

SPEC = FunctionSpec(n=5, target={1, 3}, index=2)


class TestPerronNormalizations(BaseTestClass):
    @pytest.mark.parametrize("name", PERRON_NORMALIZATIONS)
    @settings(max_examples=25, deadline=None)
    @given(u=positive_vectors, a=scales)
    def test_homogeneous(self, name, u, a):
        N = get_normalization(name, SPEC)
        assert N.value(a * u) == pytest.approx(a * N.value(u), rel=1e-10)
        assert N.grad(u) @ u == pytest.approx(N.value(u), rel=1e-10)

    @pytest.mark.parametrize("name", PERRON_NORMALIZATIONS)
    def test_gradient(self, name):
        N = get_normalization(name, SPEC)
        u = 0.5 + self.rng.random(5)
        assert check_gradient(N.value, N.grad, u) < 1e-7

    def test_l1_gradient_at_zero(self):
        assert L1Normalization().grad(np.array([0.0, 1.0])).tolist() == [1.0, 1.0]


class TestHotsNormalizations(BaseTestClass):
    @pytest.mark.parametrize("name", HOTS_NORMALIZATIONS)
    @settings(max_examples=25, deadline=None)
    @given(p=real_vectors, a=shifts)
    def test_translation_equivariant(self, name, p, a):
        N = get_normalization(name, SPEC)
        assert N.value(p + a) == pytest.approx(N.value(p) + a, abs=1e-9)
        assert N.grad(p).sum() == pytest.approx(1.0)

    def test_lse_target(self):
        N = get_normalization("lse-target-zero", SPEC)
        p = np.log(np.array([5.0, 1.0, 7.0, 1.0, 3.0]))
        assert N.value(p) == pytest.approx(np.log(2.0))
        assert N.grad(p).tolist() == pytest.approx([0.0, 0.5, 0.0, 0.5, 0.0])

    def test_values(self):
        p = np.array([0.0, 0.0])
        assert MeanZeroNormalization().value(np.array([1.0, 3.0])) == 2.0
        assert LseNormalization().value(p) == pytest.approx(np.log(2.0))
        assert LseNormalization().grad(p).tolist() == pytest.approx([0.5, 0.5])


class TestObjectives(BaseTestClass):
    @pytest.mark.parametrize("name", ["sum-of-squares", "linear", "coordinate", "exp-sum"])
    def test_gradient(self, name):
        f = get_objective(name, SPEC)
        u = self.rng.random(5)
        assert check_gradient(f.value, f.grad, u) < 1e-7

    def test_sum_of_squares_uses_target(self):
        f = get_objective("sum-of-squares", SPEC)
        assert f.value(np.arange(5.0)) == 1.0 + 9.0

    def test_explicit_weights(self):
        spec = FunctionSpec(n=3, weights=np.array([1.0, 0.0, 2.0]))
        assert get_objective("linear", spec).value(np.ones(3)) == 3.0
        with pytest.raises(ConfigurationError, match="shape"):
            get_objective("linear", FunctionSpec(n=2, weights=np.ones(3)))

    def test_normalization_objective(self):
        N = get_normalization("l2", SPEC)
        f = get_objective("normalization", SPEC, N)
        u = self.rng.random(5)
        assert f.value(u) == N.value(u)
        with pytest.raises(ConfigurationError):
            get_objective("normalization", SPEC)

    def test_coordinate_needs_index(self):
        with pytest.raises(ConfigurationError, match="index"):
            get_objective("coordinate", FunctionSpec(n=3, target={0, 1}))
        assert get_objective("coordinate", FunctionSpec(n=3, target={2})).index == 2
        with pytest.raises(ConfigurationError, match="out of range"):
            get_objective("coordinate", FunctionSpec(n=3, index=3))

    def test_empty_target(self):
        with pytest.raises(ConfigurationError, match="nonempty"):
            get_objective("exp-sum", FunctionSpec(n=3))


class TestRegistry(BaseTestClass):
    def test_unknown_names(self):
        with pytest.raises(ConfigurationError, match="unknown normalization"):
            get_normalization("l7", SPEC)
        with pytest.raises(ConfigurationError, match="unknown objective"):
            get_objective("entropy", SPEC)

    def test_supported(self):
        supported = get_supported_normalizations()
        assert set(PERRON_NORMALIZATIONS) | set(HOTS_NORMALIZATIONS) == supported
        assert "exp-sum" in get_supported_objectives()

    def test_add_objective(self):
        add_objective("double-linear", lambda spec, _: Linear(2.0 * spec.weight_vector()))
        try:
            assert get_objective("double-linear", SPEC).value(np.ones(5)) == 4.0
        finally:
            del _OBJECTIVES["double-linear"]
        assert "double-linear" not in get_supported_objectives()
