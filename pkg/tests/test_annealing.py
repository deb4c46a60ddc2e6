import math

import numpy as np
import pytest

from proxanneal import (
    CoolingConfig,
    build_schedule,
    contains,
    cube,
    run_cooling,
)
from proxanneal.annealing import PHASE_I, PHASE_II, PHASE_III, PHASE_IV
from proxanneal.errors import ContractViolation
from proxanneal.quadrature import audit_schedule, body_volume, gaussian_normalizer
from proxanneal.sampler import UNIFORM

from conftest import fresh_rng

CFG = CoolingConfig(C=1.0, eps=0.1, eta=0.1)


class TestSchedule:
    def test_endpoints_and_monotonicity(self):
        s = build_schedule(4, CFG)
        assert s.L == pytest.approx(math.log(30 * math.e))
        assert s.sigma2_sequence[0] == 0.25
        assert s.sigma2_sequence[-1] == pytest.approx(s.L**2 * 4)
        diffs = np.diff(s.sigma2_sequence)
        assert np.all(diffs > 0)

    def test_phase2_count_d4(self):
        # 1/4 -> 1 under the (1 + 1/4) multiplier takes ceil(log 4 / log 1.25) = 7
        s = build_schedule(4, CFG)
        assert s.phase_labels.count(PHASE_II) == 7

    def test_phase2_empty_d1(self):
        s = build_schedule(1, CFG)
        assert s.phase_labels.count(PHASE_II) == 0
        assert s.sigma2_sequence[0] == 1.0

    def test_update_rules(self):
        d = 3
        s = build_schedule(d, CFG)
        top = s.L**2 * d
        for (a, b), lab in zip(
            zip(s.sigma2_sequence, s.sigma2_sequence[1:]), s.phase_labels[1:]
        ):
            if lab == PHASE_II:
                assert b == pytest.approx(min(1.0, a * (1 + 1 / d)))
            else:
                assert b == pytest.approx(min(top, a * (1 + a / top)))

    def test_cardinality_bounds(self):
        for d in (1, 2, 4, 8, 16):
            s = build_schedule(d, CFG)
            n2 = s.phase_labels.count(PHASE_II)
            n3 = s.phase_labels.count(PHASE_III)
            assert n2 <= d * math.ceil(math.log2(max(d, 2))) + d
            top = s.L**2 * d
            assert n3 <= math.ceil(math.log2(top)) * math.ceil(top)

    def test_hat_eta_divides_by_realized_count(self):
        s = build_schedule(4, CFG)
        n2 = s.phase_labels.count(PHASE_II)
        n3 = s.phase_labels.count(PHASE_III)
        assert s.hat_eta == pytest.approx(CFG.eta / (2 + n2 + n3))

    def test_truncated_body_attached(self, box2):
        s = build_schedule(2, CFG, box2)
        assert s.truncated_body is not None
        assert s.truncated_body.circumscribed_radius == min(
            box2.circumscribed_radius, s.L * math.sqrt(2)
        )


class TestWarmnessQuadrature:
    def test_step_ratios_within_sqrt_e(self, box2):
        s = build_schedule(2, CFG, box2)
        audit = audit_schedule(box2, s)
        bound = math.sqrt(math.e) + 1e-6
        for _lab, _a, _b, r in audit.step_ratios:
            assert 1.0 <= r <= bound
        assert audit.phase4_ratio <= bound

    def test_phase1_ratio_bound(self, box2):
        s = build_schedule(2, CFG, box2)
        audit = audit_schedule(box2, s)
        assert audit.phase1_ratio <= 3.0 * math.sqrt(2)

    def test_phase1_ratio_bound_higher_dims(self):
        # product-form bodies let the quadrature run beyond d = 2
        for d in range(1, 7):
            body = cube(d, 2.0)
            cfg = CoolingConfig(C=max(1.0, 2 / math.sqrt(3)), eps=0.5, eta=0.1)
            s = build_schedule(d, cfg, body)
            audit = audit_schedule(body, s)
            assert audit.phase1_ratio <= 3.0 * math.sqrt(d)

    def test_truncation_mass(self, box2):
        s = build_schedule(2, CFG, box2)
        audit = audit_schedule(box2, s)
        assert audit.truncation_fraction >= 1 - CFG.eps / 3

    def test_normalizer_box_vs_numeric(self):
        # closed-form product integral agrees with the 2-d chord quadrature
        from proxanneal import truncate_to_ball

        body = cube(2, 2.0)
        tight = truncate_to_ball(body, 2.2)  # genuine box/ball intersection
        z = gaussian_normalizer(tight, 1.3)
        # Monte Carlo cross-check
        rng = fresh_rng(20)
        pts = 4.4 * rng.random((400_000, 2)) - 2.2
        inside = np.array([contains(tight, p) for p in pts])
        vals = np.exp(-np.sum(pts**2, axis=1) / 2.6) * inside
        mc = vals.mean() * 4.4**2
        assert z == pytest.approx(mc, rel=0.01)

    def test_volume_intersection(self):
        from proxanneal import truncate_to_ball

        tight = truncate_to_ball(cube(2, 2.0), 2.0)
        assert body_volume(tight) == pytest.approx(math.pi * 4.0, rel=1e-9)


class TestRunCooling:
    def test_completes_and_lands_inside(self, box2):
        cfg = CoolingConfig(C=2.0, eps=0.5, eta=0.1)
        rep = run_cooling(box2, 2, cfg, fresh_rng(21))
        assert not rep.failed
        assert contains(box2, rep.final_point)
        assert rep.total_queries == sum(
            p.run.ledger.total_queries for p in rep.per_phase
        )

    def test_high_success_rate_100_seeds(self, box2):
        cfg = CoolingConfig(C=2.0, eps=0.5, eta=0.1)
        ok = 0
        for i in range(100):
            rep = run_cooling(box2, 2, cfg, fresh_rng(i, seed=555),
                              record_trials=False)
            ok += not rep.failed
        assert ok >= 95

    def test_final_phase_targets_uniform_on_truncation(self, box2):
        cfg = CoolingConfig(C=2.0, eps=0.5, eta=0.1)
        rep = run_cooling(box2, 2, cfg, fresh_rng(22))
        last = rep.per_phase[-1]
        assert last.label == PHASE_IV
        assert last.sigma2 is None
        assert last.run.target_kind == UNIFORM
        # every Gaussian phase also ran on the truncated body, never on K
        assert rep.schedule.truncated_body is not None

    def test_phase_labels_cover_schedule(self, box2):
        cfg = CoolingConfig(C=2.0, eps=0.5, eta=0.1)
        rep = run_cooling(box2, 2, cfg, fresh_rng(23))
        labels = [p.label for p in rep.per_phase]
        assert labels[0] == PHASE_I
        assert labels[-1] == PHASE_IV
        assert len(labels) == len(rep.schedule.sigma2_sequence) + 1

    def test_contracts(self, box2):
        cfg = CoolingConfig(C=2.0, eps=0.5, eta=0.1)
        with pytest.raises(ContractViolation):
            run_cooling(box2, 3, cfg, fresh_rng(24))
        with pytest.raises(ContractViolation):
            CoolingConfig(C=0.5, eps=0.5, eta=0.1)
        with pytest.raises(ContractViolation):
            CoolingConfig(C=2.0, eps=1.5, eta=0.1)

    def test_retry_policy_reruns_failed_phase(self, box2):
        # a tuning with a tiny threshold cap forces backward failures
        from proxanneal.sampler import TuningConstants

        tun = TuningConstants(threshold_cap=1)
        cfg = CoolingConfig(C=2.0, eps=0.5, eta=0.1, tuning=tun)
        rep_abort = run_cooling(box2, 2, cfg, fresh_rng(25), retry_phase=0)
        assert rep_abort.failed
        assert rep_abort.failed_phase is not None
        rep_retry = run_cooling(box2, 2, cfg, fresh_rng(25), retry_phase=4)
        assert any(p.retries > 0 for p in rep_retry.per_phase) or not rep_retry.failed

    def test_report_serializes(self, box2):
        cfg = CoolingConfig(C=2.0, eps=0.5, eta=0.1)
        rep = run_cooling(box2, 2, cfg, fresh_rng(26))
        doc = rep.to_dict()
        assert doc["total_queries"] == rep.total_queries
        assert len(doc["per_phase"]) == len(rep.per_phase)
        assert all("seconds" in p for p in doc["per_phase"])
