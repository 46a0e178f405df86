"""
Service suy luận: nạp checkpoint (FP hoặc đã lượng tử) và siêu phân giải một ảnh
"""

import logging
import time
from datetime import datetime
from typing import Dict, Optional

from dataio.checkpoint import load_checkpoint
from dataio.codecs import load_tensor, save_tensor
from models.craft import CraftModel

logger = logging.getLogger(__name__)


class InferenceServiceError(Exception):
    """Lỗi tùy chỉnh cho InferenceService"""
    pass


class InferenceService:
    def __init__(self, model_path: str, quantized: bool = False, expected_scale: Optional[int] = None):
        model = load_checkpoint(model_path)
        if expected_scale is not None and expected_scale != model.config.scale:
            raise InferenceServiceError(
                f"scale x{expected_scale} không khớp checkpoint (x{model.config.scale})"
            )
        if quantized and model.quantizer is None:
            raise InferenceServiceError(f"checkpoint {model_path} không có bảng site lượng tử")
        # Không bật cờ quantized thì chạy full-precision kể cả khi checkpoint có site
        self.model: CraftModel = model if quantized else model.with_quantizer(None)
        self.quantized = quantized

        self.total_images = 0
        self.total_seconds = 0.0
        self.start_time = datetime.now()
        logger.info(f"🤖 InferenceService sẵn sàng: x{model.config.scale}, "
                    f"{'lượng tử' if quantized else 'full-precision'}")

    # --------------------------------------------------
    # CORE CALL
    # --------------------------------------------------
    def super_resolve_file(self, input_path: str, output_path: str) -> Dict:
        lr = load_tensor(input_path)
        start = time.time()
        try:
            sr = self.model.super_resolve(lr)
        except Exception as e:
            logger.error(f"❌ Lỗi khi siêu phân giải {input_path}: {e}")
            raise InferenceServiceError(f"Không thể siêu phân giải {input_path}: {e}") from e
        seconds = time.time() - start
        save_tensor(sr, output_path)

        self.total_images += 1
        self.total_seconds += seconds
        logger.info(f"✅ {input_path} {lr.shape[2]}x{lr.shape[1]} → {sr.shape[2]}x{sr.shape[1]} ({seconds:.2f}s)")
        return {
            'input_shape': tuple(lr.shape),
            'output_shape': tuple(sr.shape),
            'seconds': seconds,
        }

    def get_stats(self) -> Dict:
        return {
            'total_images': self.total_images,
            'total_seconds': round(self.total_seconds, 3),
            'quantized': self.quantized,
        }
