"""
Service đánh giá PSNR / SSIM
- benchmark: luma YCbCr, cắt `scale` pixel viền
- toy: RGB, không cắt viền, peak 1.0
Nguồn ảnh SR: mô hình, thư mục ảnh dự đoán có sẵn, hoặc baseline bicubic.
"""

import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.resample import bicubic_resize
from dataio.codecs import SUPPORTED_SUFFIXES, load_tensor
from dataio.datasets import ImageDataset, crop_to_multiple, degrade
from metrics.quality import MetricReport, psnr, rgb_to_luma, ssim

logger = logging.getLogger(__name__)

PROTOCOLS = ('benchmark', 'toy')
METRICS = ('psnr', 'ssim')


class EvaluationServiceError(Exception):
    """Lỗi tùy chỉnh cho EvaluationService"""
    pass


def bicubic_upscale(lr: np.ndarray, scale: int) -> np.ndarray:
    h, w = lr.shape[-2:]
    return np.clip(bicubic_resize(lr, h * scale, w * scale), 0.0, 1.0)


class EvaluationService:
    def __init__(self, scale: int, protocol: str = 'benchmark', metrics: Sequence[str] = METRICS):
        if protocol not in PROTOCOLS:
            raise EvaluationServiceError(f"protocol không hỗ trợ: {protocol}")
        unknown = [m for m in metrics if m not in METRICS]
        if unknown or not metrics:
            raise EvaluationServiceError(f"metric không hỗ trợ: {unknown or 'danh sách rỗng'}")
        self.scale = scale
        self.protocol = protocol
        self.metrics = tuple(metrics)

        self.total_images = 0
        self.start_time = datetime.now()

    @property
    def header_note(self) -> str:
        if self.protocol == 'benchmark':
            return f"protocol=benchmark luma=ycbcr crop={self.scale} peak=1.0"
        return "protocol=toy rgb crop=0 peak=1.0"

    # --------------------------------------------------
    # CORE CALL
    # --------------------------------------------------
    def score(self, sr: np.ndarray, hr: np.ndarray, name: str = '') -> MetricReport:
        if sr.shape != hr.shape:
            raise EvaluationServiceError(f"{name}: shape SR {tuple(sr.shape)} khác HR {tuple(hr.shape)}")
        if self.protocol == 'benchmark':
            a, b, crop = rgb_to_luma(sr), rgb_to_luma(hr), self.scale
        else:
            a, b, crop = sr, hr, 0
        report = MetricReport(
            psnr=psnr(a, b, crop=crop) if 'psnr' in self.metrics else math.nan,
            ssim=ssim(a, b, crop=crop) if 'ssim' in self.metrics else math.nan,
            names=[name] if name else [],
        )
        self.total_images += 1
        return report

    def evaluate(self, dataset: ImageDataset, model=None, pred_dir: Optional[str] = None,
                 baseline: bool = False) -> Tuple[List[MetricReport], MetricReport]:
        """Trả về (báo cáo từng ảnh, trung bình)"""
        if len(dataset) == 0:
            raise EvaluationServiceError("dataset rỗng")
        sources = sum([model is not None, pred_dir is not None, bool(baseline)])
        if sources != 1:
            raise EvaluationServiceError("cần đúng một nguồn SR: model, pred_dir hoặc baseline")

        reports = []
        for name, image in zip(dataset.names, dataset.images):
            hr = crop_to_multiple(image, self.scale)
            if pred_dir is not None:
                sr = crop_to_multiple(self._load_prediction(pred_dir, name), self.scale)
            elif baseline:
                sr = bicubic_upscale(degrade(hr, self.scale), self.scale)
            else:
                sr = model.super_resolve(degrade(hr, self.scale))
            report = self.score(sr, hr, name)
            logger.debug(f"{name}: PSNR {report.psnr:.4f} dB, SSIM {report.ssim:.4f}")
            reports.append(report)

        mean = MetricReport.mean_of(reports)
        logger.info(f"✅ Đánh giá {mean.n_images} ảnh: PSNR {mean.psnr:.4f} dB, SSIM {mean.ssim:.4f}")
        return reports, mean

    def _load_prediction(self, pred_dir: str, name: str) -> np.ndarray:
        for suffix in SUPPORTED_SUFFIXES:
            path = Path(pred_dir) / f"{name}{suffix}"
            if path.exists():
                return load_tensor(path)
        raise EvaluationServiceError(f"không tìm thấy ảnh dự đoán cho '{name}' trong {pred_dir}")

    def get_stats(self) -> Dict:
        return {'total_images': self.total_images, 'protocol': self.protocol}
