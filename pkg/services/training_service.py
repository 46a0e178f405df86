"""
Service huấn luyện CRAFT
- Patch LR/HR ngẫu nhiên (tất định theo seed), loss L1, Adam
- Log loss mỗi TRAIN_LOG_EVERY bước, trả về lịch sử loss để ghi CSV
"""

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Sequence, Tuple

import numpy as np

from autograd import functional as F
from autograd.optim import Adam
from autograd.tape import Tape
from config import config
from dataio.datasets import PatchSampler
from models.craft import CraftModel
from models.craft_config import CraftConfig

logger = logging.getLogger(__name__)


class TrainingServiceError(Exception):
    """Lỗi tùy chỉnh cho TrainingService"""
    pass


@dataclass
class TrainResult:
    model: CraftModel
    losses: List[Tuple[int, float]] = field(default_factory=list)
    seconds: float = 0.0


class TrainingService:
    def __init__(self, craft_config: CraftConfig, seed: int = 0):
        try:
            self.craft_config = craft_config
            self.seed = seed
            self.model = CraftModel(craft_config, seed=seed)

            self.total_steps = 0
            self.start_time = datetime.now()

            logger.info("🤖 TrainingService đã sẵn sàng")
            logger.info(f"   Tham số: {self.model.param_count():,}, scale x{craft_config.scale}")

        except Exception as e:
            logger.error(f"❌ Lỗi khởi tạo TrainingService: {e}")
            raise TrainingServiceError(f"Không thể khởi tạo TrainingService: {e}") from e

    # --------------------------------------------------
    # CORE CALL
    # --------------------------------------------------
    def train(self, dataset: Sequence[np.ndarray], iters: int, batch: int, lr: float,
              patch: int, log_every: int = config.TRAIN_LOG_EVERY) -> TrainResult:
        if iters < 0:
            raise TrainingServiceError(f"iters không được âm, nhận {iters}")
        result = TrainResult(model=self.model)
        if iters == 0:
            logger.info("⚠️ iters = 0, giữ nguyên trọng số khởi tạo")
            return result

        try:
            sampler = PatchSampler(dataset, self.craft_config.scale, patch, batch, seed=self.seed)
            params = self.model.parameters()
            optimizer = Adam(params, lr)
            start = time.time()
            running = 0.0

            for step in range(1, iters + 1):
                lr_batch, hr_batch = sampler.sample(step)
                with Tape() as tape:
                    loss = F.l1_loss(self.model.forward(lr_batch), hr_batch)
                    tape.backward(loss, params)
                optimizer.step()
                self.total_steps += 1

                value = float(loss.value)
                running += value
                if step % log_every == 0 or step == iters:
                    span = log_every if step % log_every == 0 else step % log_every
                    result.losses.append((step, running / span))
                    logger.info(f"📉 step {step}/{iters}: loss {running / span:.6f}")
                    running = 0.0

            result.seconds = time.time() - start
            logger.info(f"✅ Huấn luyện xong {iters} bước sau {result.seconds:.1f}s")
            return result

        except Exception as e:
            logger.error(f"❌ Lỗi khi huấn luyện: {e}")
            raise TrainingServiceError(f"Huấn luyện thất bại: {e}") from e

    def get_stats(self) -> Dict:
        uptime = datetime.now() - self.start_time
        return {
            'total_steps': self.total_steps,
            'param_count': self.model.param_count(),
            'uptime': str(uptime).split('.')[0],
        }
