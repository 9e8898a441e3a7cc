"""Three-phase progressive loss weighting and critic update cadence.

Phase 1 trains reconstruction with a weak adversarial term, phase 2 ramps the
remaining terms in linearly, phase 3 holds the final weights. The perceptual
weight follows the published ramp coefficients literally, including its jumps
at both phase boundaries. Critic updates thin out as training progresses.
"""

from __future__ import annotations

from dataclasses import dataclass

from .losses import LossWeights


@dataclass(frozen=True)
class PhaseSchedule:
    phase1_end: int = 20
    phase2_end: int = 50
    critic_freqs: tuple[int, int, int] = (3, 5, 7)
    adv_start: float = 0.005
    # phase-2 ramp coefficients: w_sem = sem_coef * a, w_perc = perc_base + perc_coef * a,
    # w_ctx = ctx_coef * a, with a = (epoch - phase1_end) / (phase2_end - phase1_end)
    sem_coef: float = 0.03
    perc_base: float = 3.0
    perc_coef: float = 0.5
    ctx_coef: float = 0.05
    final: tuple[float, float, float, float] = (0.01, 0.5, 0.08, 0.5)
    w_gp: float = 5.0

    def __post_init__(self) -> None:
        if not (0 < self.phase1_end < self.phase2_end):
            raise ValueError("phase boundaries must satisfy 0 < phase1_end < phase2_end")
        if any(f < 1 for f in self.critic_freqs):
            raise ValueError("critic frequencies must be >= 1")

    def phase(self, epoch: int) -> int:
        if epoch < 1:
            raise ValueError(f"epoch must be >= 1, got {epoch}")
        if epoch <= self.phase1_end:
            return 1
        if epoch <= self.phase2_end:
            return 2
        return 3

    def weights_at(self, epoch: int) -> LossWeights:
        phase = self.phase(epoch)
        if phase == 1:
            return LossWeights(w_sem=0.0, w_perc=0.0, w_ctx=0.0, w_adv=self.adv_start,
                               w_gp=self.w_gp)
        if phase == 2:
            a = (epoch - self.phase1_end) / (self.phase2_end - self.phase1_end)
            adv_final = self.final[3]
            return LossWeights(
                w_sem=self.sem_coef * a,
                w_perc=self.perc_base + self.perc_coef * a,
                w_ctx=self.ctx_coef * a,
                w_adv=self.adv_start + a * (adv_final - self.adv_start),
                w_gp=self.w_gp,
            )
        w_sem, w_perc, w_ctx, w_adv = self.final
        return LossWeights(w_sem=w_sem, w_perc=w_perc, w_ctx=w_ctx, w_adv=w_adv, w_gp=self.w_gp)

    def critic_frequency(self, epoch: int) -> int:
        return self.critic_freqs[self.phase(epoch) - 1]

    def critic_update_due(self, epoch: int, batch_idx: int) -> bool:
        if batch_idx < 0:
            raise ValueError(f"batch_idx must be >= 0, got {batch_idx}")
        return batch_idx % self.critic_frequency(epoch) == 0
