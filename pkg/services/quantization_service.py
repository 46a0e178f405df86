"""
Service lượng tử hóa sau huấn luyện
- Lấy patch calibration từ dataset (thư mục hoặc tổng hợp)
- Chạy pipeline PTQ theo method (fgo / feature / minmax / percentile)
- Xuất các hàng CSV: (l, u) từng site và loss calibration trước / sau refinement
"""

import logging
from datetime import datetime
from typing import Dict, List, Sequence, Tuple

import numpy as np

from config import config
from dataio.datasets import CalibrationSet, sample_calibration
from models.craft import CraftModel
from quant.pipeline import PtqConfig, PtqResult, ptq_pipeline
from quant.quantizer import QuantizationError
from quant.refine import calibration_loss, make_batches

logger = logging.getLogger(__name__)


class QuantizationServiceError(Exception):
    """Lỗi tùy chỉnh cho QuantizationService"""
    pass


class QuantizationService:
    def __init__(self, model: CraftModel, ptq_config: PtqConfig):
        if model.quantizer is not None:
            model = model.with_quantizer(None)
        self.model = model
        self.ptq_config = ptq_config
        self.total_runs = 0
        self.start_time = datetime.now()
        logger.info(f"🤖 QuantizationService: {ptq_config.method} {ptq_config.bits}-bit, "
                    f"epochs={ptq_config.epochs}, lr={ptq_config.learning_rate}, beta={ptq_config.beta}")

    def calibration_set(self, dataset: Sequence[np.ndarray], n: int = config.CALIB_SAMPLES,
                        patch: int = config.CALIB_PATCH, seed: int = 0) -> CalibrationSet:
        return sample_calibration(dataset, n=n, patch=patch, seed=seed, scale=self.model.config.scale)

    # --------------------------------------------------
    # CORE CALL
    # --------------------------------------------------
    def quantize(self, calib: CalibrationSet) -> PtqResult:
        try:
            result = ptq_pipeline(self.model, calib, self.ptq_config)
        except QuantizationError:
            raise
        except Exception as e:
            logger.error(f"❌ Lỗi khi lượng tử hóa: {e}")
            raise QuantizationServiceError(f"Lượng tử hóa thất bại: {e}") from e
        self.total_runs += 1
        return result

    def loss_rows(self, result: PtqResult, calib: CalibrationSet) -> List[Tuple[str, float]]:
        """Loss calibration trước / sau refinement; method baseline chỉ có một giá trị"""
        if result.refine is not None:
            return [('before', result.refine.initial_loss), ('after', result.refine.final_loss)]
        batches = make_batches(list(calib), self.ptq_config.batch)
        targets = [self.model(b) for b in batches]
        loss = calibration_loss(result.model, batches, targets)
        return [('before', loss), ('after', loss)]

    @staticmethod
    def site_rows(result: PtqResult) -> List[Tuple]:
        rows = []
        for site in result.sites:
            for channel, (l, u) in enumerate(zip(site.l, site.u)):
                rows.append((site.name, site.kind.value, site.measure.value, site.bits, channel, l, u))
        return rows

    def get_stats(self) -> Dict:
        return {'total_runs': self.total_runs, **self.ptq_config.to_dict()}
