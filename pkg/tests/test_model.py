import math

import numpy as np
import pytest
from scipy.integrate import quad

from biggins import (OffspringModel, check_conditions, laplace_derivative,
                     laplace_transform, mean_offspring, model_from_config,
                     model_to_config, moment_set, sample_offspring, sigma2)
from biggins.errors import DomainError
from biggins.model import sample_brood_batch
from biggins.streams import derive


def bg_transform_quadrature(tau2: float, theta: float) -> float:
    """Independent oracle: 2 * integral of exp(-theta x) against the
    Gaussian displacement density."""
    mu = math.log(2.0) + tau2 / 2.0
    sd = math.sqrt(tau2)
    val, _ = quad(lambda x: 2.0 * math.exp(-theta * x)
                  * math.exp(-((x - mu) ** 2) / (2 * tau2))
                  / (sd * math.sqrt(2 * math.pi)), -14, 14)
    return val


class TestLaplaceTransform:
    def test_gw_normalization(self, gw_half):
        assert laplace_transform(gw_half, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_gw_second_transform_is_inverse_mean(self, gw_half):
        # embedding identity: m(theta) = mean^(1-theta)
        assert laplace_transform(gw_half, 2.0) == pytest.approx(2.0 / 3.0,
                                                                rel=1e-15)

    def test_bg_second_transform_against_quadrature(self, bg_quarter):
        oracle = bg_transform_quadrature(0.25, 2.0)
        assert oracle == pytest.approx(0.6420127083438708, rel=1e-10)
        assert laplace_transform(bg_quarter, 2.0) == pytest.approx(oracle,
                                                                   rel=1e-10)

    def test_all_kinds_normalized(self, gw_half, bg_quarter, tab_weighted,
                                  tab_extinctable):
        pg = OffspringModel.poisson_gaussian(3.0, 0.2)
        for m in (gw_half, bg_quarter, pg, tab_weighted, tab_extinctable):
            assert laplace_transform(m, 1.0) == pytest.approx(1.0, abs=1e-12)


class TestLaplaceDerivative:
    def test_gw_closed_form(self, gw_half):
        assert laplace_derivative(gw_half, 2.0) == pytest.approx(
            -math.log(1.5) / 1.5, rel=1e-14)
        assert laplace_derivative(gw_half, 2.0) == pytest.approx(
            -0.2703100720721096, rel=1e-12)

    def test_bg_closed_form_vs_quadrature_difference(self, bg_quarter):
        h = 1e-5
        fd = (bg_transform_quadrature(0.25, 2 + h)
              - bg_transform_quadrature(0.25, 2 - h)) / (2 * h)
        assert fd == pytest.approx(-0.2042545330432570, rel=1e-7)
        assert laplace_derivative(bg_quarter, 2.0) == pytest.approx(fd,
                                                                    rel=1e-6)

    @pytest.mark.parametrize("theta", [1.0, 1.5, 2.0])
    def test_finite_difference_agreement(self, gw_half, bg_quarter,
                                         tab_weighted, theta):
        h = 1e-5
        for m in (gw_half, bg_quarter, tab_weighted):
            fd = (laplace_transform(m, theta + h)
                  - laplace_transform(m, theta - h)) / (2 * h)
            assert laplace_derivative(m, theta) == pytest.approx(fd, rel=1e-6)

    def test_derivative_at_one_is_minus_weighted_mean(self, tab_weighted):
        # definition: m'(1) = -E[sum X_i exp(-X_i)], exact over atoms
        exact = -math.fsum(
            a.prob * math.fsum(x * math.exp(-x) for x in a.displacements)
            for a in tab_weighted.atoms)
        assert laplace_derivative(tab_weighted, 1.0) == pytest.approx(
            exact, rel=1e-9)


class TestSigma2:
    def test_gw_value(self, gw_half):
        # W_1 = J / mean, so Var = Var(J) / mean^2 = 0.25 / 2.25
        assert sigma2(gw_half) == pytest.approx(1.0 / 9.0, rel=1e-14)

    def test_bg_value(self, bg_quarter):
        m2 = laplace_transform(bg_quarter, 2.0)
        assert sigma2(bg_quarter) == pytest.approx(m2 - 0.5, rel=1e-14)
        assert sigma2(bg_quarter) == pytest.approx(0.1420127083438708,
                                                   rel=1e-12)

    def test_deterministic_single_child_is_zero(self):
        still = OffspringModel.tabulated([(1.0, 1, (0.0,))], strict=False)
        assert sigma2(still) == pytest.approx(0.0, abs=1e-15)

    def test_bg_monte_carlo(self, bg_quarter):
        rng = derive(5, "sigma-mc")
        counts, disp = sample_brood_batch(bg_quarter, 100_000, rng)
        w1 = np.exp(-disp).reshape(-1, 2).sum(axis=1)
        est = w1.var(ddof=1)
        se = np.std((w1 - w1.mean()) ** 2, ddof=1) / math.sqrt(w1.size)
        assert abs(est - sigma2(bg_quarter)) <= 4 * se

    def test_pg_is_compound_poisson_second_transform(self):
        # Var W_1 = rate * E[exp(-2X)] collapses to m(2); check against MC
        pg = OffspringModel.poisson_gaussian(3.0, 0.2)
        assert sigma2(pg) == pytest.approx(laplace_transform(pg, 2.0),
                                           rel=1e-14)
        rng = derive(6, "sigma-mc-pg")
        counts, disp = sample_brood_batch(pg, 100_000, rng)
        sums = np.zeros(counts.size)
        np.add.at(sums, np.repeat(np.arange(counts.size), counts),
                  np.exp(-disp))
        est = sums.var(ddof=1)
        se = np.std((sums - sums.mean()) ** 2, ddof=1) / math.sqrt(sums.size)
        assert abs(est - sigma2(pg)) <= 4 * se


class TestMomentSet:
    def test_gw(self, gw_half):
        ms = moment_set(gw_half)
        assert ms.v2 == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert ms.a == pytest.approx(0.5 * math.log(1.5), rel=1e-14)
        assert ms.lambda_a == pytest.approx(0.5 * math.log(1.5), rel=1e-14)
        assert ms.d_a == pytest.approx(1.0 / (1.0 - 1.5 ** -0.5), rel=1e-12)

    def test_bg(self, bg_quarter):
        ms = moment_set(bg_quarter)
        assert ms.v2 == pytest.approx(ms.sigma2 / (1 - ms.m2), rel=1e-15)
        assert ms.v2 == pytest.approx(0.396697624898605, rel=1e-12)
        assert ms.c_a == pytest.approx(10.354797798248358, rel=1e-12)
        assert ms.lambda_a is None and ms.d_a is None

    def test_c_a_positive_iff_condition_vi(self, gw_half, bg_quarter,
                                           tab_weighted, tab_extinctable):
        pg = OffspringModel.poisson_gaussian(3.0, 0.2)
        for m in (gw_half, bg_quarter, pg, tab_weighted, tab_extinctable):
            ms = moment_set(m)
            vi = check_conditions(m)["vi"]
            assert (ms.c_a is not None and ms.c_a > 0) == vi.passed

    def test_rejects_m2_outside_unit_interval(self):
        hot = OffspringModel.binary_gaussian(0.8)
        with pytest.raises(DomainError):
            moment_set(hot)


class TestCheckConditions:
    def test_bg_quarter_all_pass(self, bg_quarter):
        rep = check_conditions(bg_quarter)
        assert rep.all_passed
        lhs, rhs = rep["vi"].margin
        assert lhs == pytest.approx(0.2215735902799726, rel=1e-10)
        assert rhs == pytest.approx(0.3181471805599453, rel=1e-10)

    def test_bg_hot_fails_ii(self):
        rep = check_conditions(OffspringModel.binary_gaussian(0.8))
        assert not rep["ii"].passed
        # m(2) = e^0.8 / 2 > 1
        assert rep["ii"].margin[0] == pytest.approx(math.exp(0.8) / 2,
                                                    rel=1e-12)

    def test_gw_margins(self, gw_half):
        rep = check_conditions(gw_half)
        assert rep.all_passed
        lhs, rhs = rep["vi"].margin
        assert lhs == pytest.approx(0.2027325540540822, rel=1e-10)
        assert rhs == pytest.approx(math.log(1.5), rel=1e-10)

    def test_tabulated_exact_moment_check(self, tab_weighted):
        rep = check_conditions(tab_weighted)
        assert rep["iv"].passed
        assert math.isfinite(rep["iv"].margin[0])


class TestSampling:
    def test_gw_displacements_all_log_mean(self, gw_half):
        rng = derive(7, "brood")
        for _ in range(20):
            disp = sample_offspring(gw_half, rng)
            assert np.all(disp == math.log(1.5))

    def test_bg_always_two_children(self, bg_quarter):
        rng = derive(8, "brood")
        for _ in range(20):
            assert sample_offspring(bg_quarter, rng).size == 2

    def test_certain_extinction_atom_gives_empty(self):
        dead = OffspringModel.tabulated([(1.0, 0, ())], strict=False)
        assert sample_offspring(dead, derive(9)).size == 0

    @pytest.mark.parametrize("theta", [1.0, 1.5, 2.0])
    def test_monte_carlo_transform_agreement(self, gw_half, bg_quarter,
                                             tab_weighted, theta):
        # weighted brood sums over >= 1e5 draws within 4 standard errors
        pg = OffspringModel.poisson_gaussian(3.0, 0.2)
        for mi, m in enumerate((gw_half, bg_quarter, pg, tab_weighted)):
            rng = derive(11, "mc", mi, int(theta * 2))
            counts, disp = sample_brood_batch(m, 100_000, rng)
            ends = np.cumsum(counts)
            sums = np.zeros(counts.size)
            np.add.at(sums, np.repeat(np.arange(counts.size), counts),
                      np.exp(-theta * disp))
            est = sums.mean()
            se = sums.std(ddof=1) / math.sqrt(sums.size)
            assert abs(est - laplace_transform(m, theta)) <= 4 * se, \
                f"kind={m.kind} theta={theta}"

    def test_brood_batch_alignment(self, tab_weighted):
        counts, disp = sample_brood_batch(tab_weighted, 1000, derive(12))
        assert counts.sum() == disp.size
        # every segment must be one of the atom displacement vectors
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        vecs = {a.count: np.asarray(a.displacements)
                for a in tab_weighted.atoms}
        for s, c in zip(starts[:50], counts[:50]):
            assert np.allclose(disp[s:s + c], vecs[c])


class TestConstructorsAndConfig:
    def test_invalid_pmf_rejected(self):
        with pytest.raises(DomainError):
            OffspringModel.galton_watson([0.5, 0.5])  # mean 0.5 <= 1
        with pytest.raises(DomainError):
            OffspringModel.galton_watson([0.2, 0.5, 0.5])  # sums to 1.2

    def test_unnormalized_atoms_rejected(self):
        with pytest.raises(DomainError):
            OffspringModel.tabulated([(1.0, 1, (1.0,))])  # m(1) != 1

    def test_round_trip_all_kinds(self, gw_half, bg_quarter, tab_weighted):
        pg = OffspringModel.poisson_gaussian(3.0, 0.2)
        for m in (gw_half, bg_quarter, pg, tab_weighted):
            assert model_from_config(model_to_config(m)) == m

    def test_unknown_config_key_rejected(self):
        with pytest.raises(DomainError):
            model_from_config({"kind": "BinaryGaussian", "tau2": "0.25",
                               "bogus": "1"})

    def test_mean_offspring(self, gw_half, tab_extinctable):
        assert mean_offspring(gw_half) == pytest.approx(1.5)
        assert mean_offspring(tab_extinctable) == pytest.approx(1.2)
