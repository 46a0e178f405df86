"""
Tinh chỉnh biên lượng tử (boundary refinement)
Chỉ (l, u) của các site được học, trọng số đóng băng. Loss L1 giữa output mô hình
full-precision (đích) và output mô hình lượng tử: Σ|X − X̂| / B.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from autograd import functional as F
from autograd.optim import make_optimizer
from autograd.tape import Tape, no_grad

logger = logging.getLogger(__name__)


@dataclass
class RefineResult:
    initial_loss: float
    final_loss: float
    epoch_losses: List[float] = field(default_factory=list)
    best_epoch: int = 0
    clamp_events: int = 0

    def to_dict(self) -> dict:
        return {
            'initial_loss': self.initial_loss,
            'final_loss': self.final_loss,
            'epoch_losses': list(self.epoch_losses),
            'best_epoch': self.best_epoch,
            'clamp_events': self.clamp_events,
        }


def make_batches(samples: Sequence[np.ndarray], batch: int) -> List[np.ndarray]:
    """Ghép patch theo đúng thứ tự calibration; batch cuối có thể thiếu"""
    return [np.stack(samples[i:i + batch]) for i in range(0, len(samples), batch)]


def calibration_loss(model_q, batches: List[np.ndarray], targets: List[np.ndarray]) -> float:
    """Trung bình loss L1 trên các batch, không ghi tape"""
    total = 0.0
    with no_grad():
        for batch, target in zip(batches, targets):
            total += float(F.l1_loss(model_q.forward(batch), target).value)
    return total / len(batches)


def boundary_refine(model_fp, model_q, calib: Sequence[np.ndarray], cfg) -> RefineResult:
    """
    Học (l, u) của mọi site trong `model_q.quantizer` trong cfg.epochs epoch.
    Loss trung bình được đo trước khi học và sau mỗi epoch; biên tốt nhất được giữ lại,
    vì vậy final_loss ≤ initial_loss.
    """
    quantizer = model_q.quantizer
    samples = list(calib)
    batches = make_batches(samples, cfg.batch)
    targets = [model_fp(b) for b in batches]

    params = quantizer.boundary_parameters()
    initial = calibration_loss(model_q, batches, targets)
    result = RefineResult(initial_loss=initial, final_loss=initial)
    if not params or cfg.epochs == 0:
        quantizer.commit_boundaries()
        return result

    optimizer = make_optimizer(cfg.optimizer, params, cfg.learning_rate)
    best, best_state = initial, quantizer.snapshot()
    clamps_before = quantizer.clamp_events
    logger.info(f"🔧 Boundary refinement: {len(params) // 2} site, {cfg.epochs} epoch, "
                f"lr={cfg.learning_rate}, loss ban đầu {initial:.6f}")

    with model_q.frozen():
        for epoch in range(1, cfg.epochs + 1):
            for batch, target in zip(batches, targets):
                with Tape() as tape:
                    loss = F.l1_loss(model_q.forward(batch), target)
                    tape.backward(loss, params)
                optimizer.step()
                quantizer.enforce_order()
            epoch_loss = calibration_loss(model_q, batches, targets)
            result.epoch_losses.append(epoch_loss)
            logger.info(f"   epoch {epoch}/{cfg.epochs}: loss {epoch_loss:.6f}")
            if epoch_loss < best:
                best, best_state = epoch_loss, quantizer.snapshot()
                result.best_epoch = epoch

    quantizer.restore(best_state)
    quantizer.commit_boundaries()
    result.final_loss = best
    result.clamp_events = quantizer.clamp_events - clamps_before
    logger.info(f"✅ Boundary refinement xong: {initial:.6f} → {best:.6f} (epoch tốt nhất {result.best_epoch})")
    return result
