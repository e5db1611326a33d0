import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from declnode import (
    PENALTY_FAMILIES,
    PenaltyKind,
    has_identically_zero_kappa2,
    kappa,
    penalty_from_name,
    phi_value,
)

ALL_KINDS = [PenaltyKind(f, 1.5) for f in PENALTY_FAMILIES]


class TestTableValues:
    def test_quadratic(self):
        kind = PenaltyKind("quadratic")
        assert phi_value(kind, 3.0) == pytest.approx(4.5, abs=0)
        k1, k2 = kappa(kind, 7.3)
        assert (k1, k2) == (1.0, 0.0)

    def test_welsch_at_zero(self):
        kind = PenaltyKind("welsch", 1.0)
        assert phi_value(kind, 0.0) == 0.0
        k1, k2 = kappa(kind, 0.0)
        assert (k1, k2) == (1.0, -1.0)

    def test_welsch_general_alpha_at_zero(self):
        kind = PenaltyKind("welsch", 2.0)
        k1, k2 = kappa(kind, 0.0)
        assert k1 == pytest.approx(1 / 4.0, rel=1e-15)
        assert k2 == pytest.approx(-1 / 16.0, rel=1e-15)

    def test_huber_outside(self):
        kind = PenaltyKind("huber", 1.0)
        assert phi_value(kind, 2.0) == pytest.approx(1.5, abs=0)
        k1, k2 = kappa(kind, 2.0)
        assert k1 == pytest.approx(0.5, abs=0)
        assert k2 == pytest.approx(-1.0 / 8.0, abs=0)

    def test_huber_inside(self):
        k1, k2 = kappa(PenaltyKind("huber", 1.0), 0.5)
        assert (k1, k2) == (1.0, 0.0)

    def test_pseudo_huber(self):
        kind = PenaltyKind("pseudo-huber", 2.0)
        z = 1.0
        w = 1.0 + (z / 2.0) ** 2
        assert phi_value(kind, z) == pytest.approx(4.0 * (np.sqrt(w) - 1.0), rel=1e-15)
        k1, k2 = kappa(kind, z)
        assert k1 == pytest.approx(w ** -0.5, rel=1e-15)
        assert k2 == pytest.approx(-0.25 * w ** -1.5, rel=1e-15)

    def test_trunc_quad_boundary_uses_inside_branch(self):
        kind = PenaltyKind("trunc-quad", 1.5)
        assert phi_value(kind, 1.5) == pytest.approx(0.5 * 1.5**2)
        k1, _ = kappa(kind, 1.5)
        assert k1 == 1.0

    def test_phi_zero_at_origin(self):
        for kind in ALL_KINDS:
            assert phi_value(kind, 0.0) == 0.0


class TestDerivativeConsistency:
    """kappa1 = phi'/z and kappa2 = (phi'' - kappa1)/z**2, checked against
    central differences of phi away from branch points."""

    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.family)
    def test_consistency(self, kind):
        z = np.linspace(0.1, 4.0, 117)
        z = z[np.abs(z - kind.alpha) > 1e-3]
        h = 1e-6 * np.maximum(1.0, z)
        phi_p = (phi_value(kind, z + h) - phi_value(kind, z - h)) / (2 * h)
        # Second differences need the quarter-power step, or rounding in
        # phi swamps the h**2 denominator.
        h2 = 1e-4 * np.maximum(1.0, z)
        h2 = np.minimum(h2, np.abs(z - kind.alpha) / 2)  # stay on one branch
        phi_pp = (
            phi_value(kind, z + h2) - 2 * phi_value(kind, z) + phi_value(kind, z - h2)
        ) / h2**2
        k1, k2 = kappa(kind, z)
        np.testing.assert_allclose(k1, phi_p / z, rtol=1e-4, atol=1e-7)
        np.testing.assert_allclose(k2, (phi_pp - k1) / z**2, rtol=1e-4, atol=1e-5)


class TestBranchBehaviour:
    @pytest.mark.parametrize("family", ["huber", "pseudo-huber"])
    def test_kappa1_continuous_at_alpha(self, family):
        kind = PenaltyKind(family, 1.25)
        eps = 1e-13
        left = kappa(kind, kind.alpha - eps).kappa1
        right = kappa(kind, kind.alpha + eps).kappa1
        assert abs(left - right) <= 1e-12

    def test_trunc_quad_kappa1_discontinuous_at_alpha(self):
        kind = PenaltyKind("trunc-quad", 1.25)
        left = kappa(kind, kind.alpha - 1e-13).kappa1
        right = kappa(kind, kind.alpha + 1e-13).kappa1
        assert left == 1.0 and right == 0.0

    def test_kappa2_identically_zero_families(self):
        z = np.linspace(0.0, 10.0, 257)
        for family in ("quadratic", "trunc-quad"):
            kind = PenaltyKind(family, 1.5)
            assert has_identically_zero_kappa2(kind)
            assert (kappa(kind, z).kappa2 == 0.0).all()
        assert not has_identically_zero_kappa2(PenaltyKind("welsch"))


class TestInvariants:
    @settings(deadline=None, max_examples=200)
    @given(
        family=st.sampled_from(PENALTY_FAMILIES),
        alpha=st.floats(1e-3, 1e3),
        z=st.floats(0.0, 1e6),
    )
    def test_kappa_signs(self, family, alpha, z):
        k1, k2 = kappa(PenaltyKind(family, alpha), z)
        assert k1 >= 0.0
        assert k2 <= 0.0

    @settings(deadline=None, max_examples=200)
    @given(
        family=st.sampled_from(PENALTY_FAMILIES),
        alpha=st.floats(1e-3, 1e3),
        z=st.floats(0.0, 1e6),
    )
    def test_phi_nonnegative(self, family, alpha, z):
        assert phi_value(PenaltyKind(family, alpha), z) >= 0.0

    def test_rejects_negative_z(self):
        with pytest.raises(ValueError):
            phi_value(PenaltyKind("huber"), -1.0)
        with pytest.raises(ValueError):
            kappa(PenaltyKind("huber"), np.array([0.5, -0.5]))


class TestNaming:
    def test_case_insensitive_names(self):
        for name in ("Quadratic", "PSEUDO-HUBER", "huber", "Welsch", "TRUNC-QUAD"):
            kind = penalty_from_name(name, alpha=2.0)
            assert kind.family == name.lower()

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            penalty_from_name("cauchy")

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            PenaltyKind("huber", 0.0)

    def test_array_evaluation_matches_scalar(self, rng):
        z = rng.random(64) * 5
        for kind in ALL_KINDS:
            vals = phi_value(kind, z)
            k1, k2 = kappa(kind, z)
            for i in (0, 17, 63):
                assert vals[i] == phi_value(kind, float(z[i]))
                ks = kappa(kind, float(z[i]))
                assert (k1[i], k2[i]) == (ks.kappa1, ks.kappa2)
