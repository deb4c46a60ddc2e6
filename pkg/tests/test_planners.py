import math

import pytest

from proxanneal import plan_gaussian, plan_uniform
from proxanneal.errors import ContractViolation
from proxanneal.sampler import TuningConstants

M_WARM = 2 * math.sqrt(math.e)
BIG_CAP = TuningConstants(threshold_cap=10**30)


class TestPlanUniform:
    def test_golden_triple(self):
        # frozen from direct evaluation of the planner formulas
        p = plan_uniform(10, 4.0, M_WARM, 0.01, 0.1, BIG_CAP)
        assert p.n == 591367
        assert p.h == pytest.approx(0.00023489911098222775, rel=0, abs=0)
        assert p.N == 360272702163056
        # independent recomputation, two passes of (n from h, h from n)
        h = 1 / (200 * math.log(9 * M_WARM / 0.01))
        for _ in range(2):
            n = math.ceil(1600 * math.log(M_WARM * (10 + 16 / h) / 0.001) ** 2)
            h = 1 / (200 * math.log(9 * n * M_WARM / 0.01))
        Z = 9 * n * M_WARM / 0.01
        assert (p.n, p.h, p.N) == (n, h, math.ceil(Z * math.log(Z) ** 4))

    def test_self_consistency_identity(self):
        p = plan_uniform(6, 3.0, 2.0, 0.05, 0.2)
        assert p.h == 1 / (2 * 36 * math.log(9 * p.n * p.M / p.eta))
        assert p.h * 2 * 36 * math.log(9 * p.n * p.M / p.eta) == pytest.approx(
            1.0, abs=1e-14
        )

    def test_doubling_D_at_least_quadruples_n(self):
        a = plan_uniform(4, 2.0, 2.0, 0.05, 0.2)
        b = plan_uniform(4, 4.0, 2.0, 0.05, 0.2)
        assert b.n >= 4 * a.n

    def test_threshold_cap_recorded(self):
        p = plan_uniform(10, 4.0, M_WARM, 0.01, 0.1)
        assert p.N == TuningConstants().threshold_cap
        assert p.N_clamped

    def test_input_contracts(self):
        with pytest.raises(ContractViolation):
            plan_uniform(0, 2.0, 1.0, 0.1, 0.1)
        with pytest.raises(ContractViolation):
            plan_uniform(2, 0.5, 1.0, 0.1, 0.1)
        with pytest.raises(ContractViolation):
            plan_uniform(2, 2.0, 0.5, 0.1, 0.1)
        with pytest.raises(ContractViolation):
            plan_uniform(2, 2.0, 1.0, 1.5, 0.1)
        with pytest.raises(ContractViolation):
            plan_uniform(2, 2.0, 1.0, 0.1, 0.0)


class TestPlanGaussian:
    def test_golden_triple(self):
        p = plan_gaussian(10, 1.0, 4.0, M_WARM, 0.01, 0.1, BIG_CAP)
        assert p.n == 9001
        assert p.h == pytest.approx(0.00059068048282430593, rel=0, abs=0)
        assert p.N == 2284332110207
        # the d^2 sigma2 >> 1 regime picks the 1/(d^2 sigma2 - 1) branch
        n = math.ceil(100 * math.log(M_WARM * 4 / 0.001) ** 2)
        Z = 9 * n * M_WARM / 0.01
        assert p.h == (1 / 99) / math.log(Z)
        assert p.N == math.ceil(Z * math.log(Z) ** 4)

    def test_guard_branch_d1(self):
        # d^2 sigma2 = 1: the 1/(d^2 sigma2 - 1) branch would divide by zero
        p = plan_gaussian(1, 1.0, 2.0, 2.0, 0.1, 0.5, BIG_CAP)
        assert p.h == 1.0 / math.log(9 * p.n * 2.0 / 0.1)

    def test_n_linear_in_sigma2(self):
        a = plan_gaussian(4, 1.0, 2.0, 2.0, 0.05, 0.2, BIG_CAP)
        b = plan_gaussian(4, 2.0, 2.0, 2.0, 0.05, 0.2, BIG_CAP)
        assert b.n / a.n == pytest.approx(2.0, rel=1e-3)

    def test_loglog_variant(self):
        tun = TuningConstants(threshold_cap=10**30, gaussian_h_variant="loglog")
        p = plan_gaussian(10, 1.0, 4.0, M_WARM, 0.01, 0.1, tun)
        Z = 9 * p.n * M_WARM / 0.01
        lz = math.log(Z)
        knee = math.log(lz) / (2 * lz)
        assert p.h == 1.0 * (math.log(lz) / lz) * min(0.1, 1 / (100 - knee))
        # log log Z > 1 here, so the alternative step factor is the larger one
        q = plan_gaussian(10, 1.0, 4.0, M_WARM, 0.01, 0.1, BIG_CAP)
        assert p.h > q.h

    def test_sigma2_contract(self):
        with pytest.raises(ContractViolation):
            plan_gaussian(2, 0.0, 2.0, 1.0, 0.1, 0.1)
        with pytest.raises(ContractViolation):
            plan_gaussian(2, math.inf, 2.0, 1.0, 0.1, 0.1)
