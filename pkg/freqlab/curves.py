"""
Đường cong tỉ lệ sụt PSNR khi bỏ tần số cao
  mode D: (P(0) − P^D(x)) / P(0), P^D so SR(x) với HR đã bỏ tần số (cùng x)
  mode E: (P^E(x) − P(0)) / P(0), P^E so SR(x) với HR gốc
Pipeline mỗi ảnh: bỏ tần số trên HR → bicubic ↓r → siêu phân giải → đo PSNR
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from dataio.datasets import crop_to_multiple, degrade
from freqlab.dropping import DropSpec, DropSpecError
from metrics.quality import psnr

logger = logging.getLogger(__name__)

SuperResolver = Callable[[np.ndarray], np.ndarray]
MODES = ('D', 'E')


@dataclass
class DropCurve:
    mode: str
    kind: str
    points: List[Tuple[float, float]] = field(default_factory=list)
    p0: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DropSpecError(f"mode phải là D hoặc E, nhận {self.mode}")
        xs = [x for x, _ in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise DropSpecError(f"trục x phải tăng chặt, nhận {xs}")

    @property
    def xs(self) -> List[float]:
        return [x for x, _ in self.points]

    @property
    def ratios(self) -> List[float]:
        return [r for _, r in self.points]

    def to_rows(self) -> List[Tuple[float, float]]:
        return list(self.points)


def _image_scores(model: SuperResolver, hr: np.ndarray, specs: Sequence[DropSpec],
                  mode: str, scale: int, cap: float) -> Tuple[float, List[float]]:
    hr = crop_to_multiple(hr, scale)
    sr0 = _super_resolve(model, degrade(hr, scale))
    p0 = psnr(sr0, hr, cap=cap)
    scores = []
    for spec in specs:
        dropped = spec.apply(hr)
        sr = _super_resolve(model, degrade(dropped, scale))
        target = dropped if mode == 'D' else hr
        scores.append(psnr(sr, target, cap=cap))
    return p0, scores


def _super_resolve(model: SuperResolver, lr: np.ndarray) -> np.ndarray:
    out = model(lr[None])
    return out[0]


def drop_ratio_curve(model: SuperResolver, dataset: Sequence[np.ndarray], points: Sequence,
                     mode: str = 'D', scale: int = 2, cap: Optional[float] = None,
                     max_workers: int = 1) -> DropCurve:
    """
    `points` là danh sách γ (float) hoặc DropSpec (γ hoặc θ).
    `model` nhận batch N×3×h×w và trả N×3×(rh)×(rw).
    """
    if mode not in MODES:
        raise DropSpecError(f"mode phải là D hoặc E, nhận {mode}")
    images = list(dataset)
    if not images:
        raise DropSpecError("dataset rỗng")
    specs = [p if isinstance(p, DropSpec) else DropSpec(gamma=float(p)) for p in points]
    if not specs:
        raise DropSpecError("danh sách điểm thí nghiệm rỗng")
    kind = 'gamma' if specs[0].gamma is not None else 'theta'
    cap = config.PSNR_CAP_DB if cap is None else cap

    def run(hr):
        return _image_scores(model, hr, specs, mode, scale, cap)

    # Kết quả gộp theo đúng thứ tự ảnh đầu vào
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, images))
    else:
        results = [run(hr) for hr in images]

    p0 = float(np.mean([r[0] for r in results]))
    curve_points = []
    for i, spec in enumerate(specs):
        pk = float(np.mean([r[1][i] for r in results]))
        ratio = (p0 - pk) / p0 if mode == 'D' else (pk - p0) / p0
        curve_points.append((spec.x, ratio))
        logger.debug(f"mode {mode} {kind}={spec.x}: P={pk:.4f} dB, ratio={ratio:.6f}")

    logger.info(f"📉 Drop curve mode {mode}: {len(specs)} điểm trên {len(images)} ảnh, P(0)={p0:.3f} dB")
    return DropCurve(mode=mode, kind=kind, points=curve_points, p0=p0)
