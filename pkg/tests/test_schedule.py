import pytest

from faceinpaint.schedule import PhaseSchedule


SCHED = PhaseSchedule()


class TestWeightsAt:
    def test_phase1_reconstruction_with_weak_adversary(self):
        for epoch in (1, 10, 20):
            w = SCHED.weights_at(epoch)
            assert (w.w_sem, w.w_perc, w.w_ctx, w.w_adv) == (0.0, 0.0, 0.0, 0.005)

    def test_phase2_ramp_endpoints(self):
        w21 = SCHED.weights_at(21)
        a = 1 / 30
        assert w21.w_sem == pytest.approx(0.03 * a)
        assert w21.w_perc == pytest.approx(3.0 + 0.5 * a)
        assert w21.w_ctx == pytest.approx(0.05 * a)
        assert w21.w_adv == pytest.approx(0.005 + a * (0.5 - 0.005))

        w35 = SCHED.weights_at(35)
        assert w35.w_sem == pytest.approx(0.015)
        assert w35.w_perc == pytest.approx(3.25)
        assert w35.w_ctx == pytest.approx(0.025)
        assert w35.w_adv == pytest.approx(0.2525)

        w50 = SCHED.weights_at(50)
        assert (w50.w_sem, w50.w_perc, w50.w_ctx, w50.w_adv) == (0.03, 3.5, 0.05, 0.5)

    def test_phase3_fixed_weights(self):
        for epoch in (51, 100, 250):
            w = SCHED.weights_at(epoch)
            assert (w.w_sem, w.w_perc, w.w_ctx, w.w_adv) == (0.01, 0.5, 0.08, 0.5)

    def test_perceptual_weight_drops_at_phase3(self):
        # the published coefficients jump from 3.5 to 0.5 across this boundary
        assert SCHED.weights_at(50).w_perc == pytest.approx(3.5)
        assert SCHED.weights_at(51).w_perc == pytest.approx(0.5)
        assert SCHED.weights_at(50).w_sem == pytest.approx(0.03)
        assert SCHED.weights_at(51).w_sem == pytest.approx(0.01)

    def test_monotone_ramp_for_sem_and_adv(self):
        sems = [SCHED.weights_at(e).w_sem for e in range(20, 51)]
        advs = [SCHED.weights_at(e).w_adv for e in range(20, 51)]
        assert all(a <= b for a, b in zip(sems, sems[1:]))
        assert all(a <= b for a, b in zip(advs, advs[1:]))

    def test_piecewise_linear_on_ramp(self):
        for e in range(22, 50):
            left = SCHED.weights_at(e - 1)
            mid = SCHED.weights_at(e)
            right = SCHED.weights_at(e + 1)
            for name in ("w_sem", "w_perc", "w_ctx", "w_adv"):
                interp = 0.5 * (getattr(left, name) + getattr(right, name))
                assert getattr(mid, name) == pytest.approx(interp)

    def test_epoch_below_one_rejected(self):
        with pytest.raises(ValueError):
            SCHED.weights_at(0)

    def test_gp_weight_carried(self):
        assert SCHED.weights_at(1).w_gp == 5.0


class TestCriticCadence:
    def test_phase_frequencies(self):
        assert SCHED.critic_frequency(5) == 3
        assert SCHED.critic_frequency(30) == 5
        assert SCHED.critic_frequency(100) == 7

    def test_examples(self):
        assert SCHED.critic_update_due(5, 6) is True       # 6 mod 3 == 0
        assert SCHED.critic_update_due(30, 6) is False     # 6 mod 5 != 0
        assert SCHED.critic_update_due(100, 14) is True    # 14 mod 7 == 0

    def test_measured_rate_over_epoch(self):
        for epoch, freq in ((1, 3), (25, 5), (60, 7)):
            due = sum(SCHED.critic_update_due(epoch, b) for b in range(210))
            assert due == 210 // freq

    def test_negative_batch_rejected(self):
        with pytest.raises(ValueError):
            SCHED.critic_update_due(1, -1)


def test_boundary_validation():
    with pytest.raises(ValueError):
        PhaseSchedule(phase1_end=50, phase2_end=20)
    with pytest.raises(ValueError):
        PhaseSchedule(critic_freqs=(0, 5, 7))
