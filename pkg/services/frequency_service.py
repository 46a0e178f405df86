"""
Service thí nghiệm tần số
- drop curve (mode D / E) theo γ hoặc θ
- phổ log-biên độ theo bán kính và phổ dư giữa hai ảnh
"""

import logging
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from core.tensor import TensorShapeError
from dataio.codecs import load_tensor
from freqlab.curves import DropCurve, drop_ratio_curve
from freqlab.dropping import DropSpec
from freqlab.spectrum import SpectrumReport, log_amplitude_spectrum, radial_profile, residual_spectrum

logger = logging.getLogger(__name__)


class FrequencyServiceError(Exception):
    """Lỗi tùy chỉnh cho FrequencyService"""
    pass


class FrequencyService:
    def __init__(self, max_workers: int = config.CRAFT_THREADS):
        self.max_workers = max_workers
        self.total_curves = 0
        self.start_time = datetime.now()

    # --------------------------------------------------
    # DROP CURVES
    # --------------------------------------------------
    def drop_curve(self, model, dataset: Sequence[np.ndarray], mode: str,
                   gammas: Optional[List[float]] = None, thetas: Optional[List[int]] = None) -> DropCurve:
        if (gammas is None) == (thetas is None):
            raise FrequencyServiceError("cần đúng một trong gammas hoặc thetas")
        values = gammas if gammas is not None else thetas
        if not values:
            raise FrequencyServiceError("danh sách gamma/theta rỗng")
        points = [DropSpec(gamma=g) for g in gammas] if gammas is not None else [DropSpec(theta=t) for t in thetas]

        curve = drop_ratio_curve(model, dataset, points, mode=mode, scale=model.config.scale,
                                 max_workers=self.max_workers)
        self.total_curves += 1
        return curve

    # --------------------------------------------------
    # SPECTRUM
    # --------------------------------------------------
    def spectrum(self, input_path: str, compare_path: Optional[str] = None) -> Tuple[SpectrumReport, Optional[SpectrumReport]]:
        """Phổ của ảnh input; có ảnh so sánh thì kèm profile bán kính của phổ dư"""
        image = load_tensor(input_path)
        report = log_amplitude_spectrum(image)
        if compare_path is None:
            return report, None
        other = load_tensor(compare_path)
        try:
            residual = residual_spectrum(image, other)
        except TensorShapeError as e:
            raise FrequencyServiceError(f"kích thước ảnh so sánh không khớp: {e}") from e
        logger.info(f"✅ Phổ dư {input_path} vs {compare_path}: trung bình {float(residual.mean()):.6f}")
        return report, radial_profile(residual)

    def get_stats(self) -> Dict:
        return {'total_curves': self.total_curves, 'max_workers': self.max_workers}
