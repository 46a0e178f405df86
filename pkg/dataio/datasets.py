"""
Dataset ảnh HR, suy giảm bicubic, lấy mẫu calibration và patch huấn luyện
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from core.resample import bicubic_resize
from core.tensor import TensorShapeError
from dataio.codecs import SUPPORTED_SUFFIXES, load_tensor
from dataio.synthetic import GENERATORS, HIGH_FREQ_MIX, SyntheticDatasetSpec
from utils.seeding import SeedStreams

logger = logging.getLogger(__name__)

SYNTHETIC_SOURCE = 'synthetic'
SYNTHETIC_HF_SOURCE = 'synthetic-hf'


class DatasetError(ValueError):
    """Lỗi tạo / đọc dataset"""
    pass


class CalibrationError(DatasetError):
    """Không lấy được tập calibration"""
    pass


# ---------------- degradation ----------------
def crop_to_multiple(image: np.ndarray, scale: int) -> np.ndarray:
    h, w = image.shape[-2:]
    return image[..., :h - h % scale, :w - w % scale]


def degrade(hr: np.ndarray, scale: int) -> np.ndarray:
    """HR → LR bằng bicubic ↓scale (HR được cắt về bội của scale trước)"""
    if scale < 1:
        raise TensorShapeError(f"scale phải >= 1, nhận {scale}")
    hr = crop_to_multiple(hr, scale)
    h, w = hr.shape[-2:]
    return bicubic_resize(hr, h // scale, w // scale)


# ---------------- dataset ----------------
@dataclass
class ImageDataset:
    images: List[np.ndarray]
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = [f"img{i:04d}" for i in range(len(self.images))]

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.images)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.images[index]

    @classmethod
    def from_directory(cls, path, max_workers: int = 1) -> 'ImageDataset':
        """Mọi ảnh .ppm / .png trong thư mục, sắp theo tên file"""
        root = Path(path)
        if not root.is_dir():
            raise DatasetError(f"thư mục dữ liệu không tồn tại: {root}")
        files = sorted(p for p in root.iterdir() if p.suffix.lower() in SUPPORTED_SUFFIXES)
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                images = list(pool.map(load_tensor, files))
        else:
            images = [load_tensor(p) for p in files]
        logger.info(f"📂 Đọc {len(images)} ảnh từ {root}")
        return cls(images=images, names=[p.stem for p in files])

    @classmethod
    def from_synthetic(cls, spec: SyntheticDatasetSpec) -> 'ImageDataset':
        images = spec.generate()
        names = [f"{spec.generator_of(i)}{i:04d}" for i in range(len(images))]
        return cls(images=images, names=names)


def open_dataset(source: str, seed: int = 0, count: Optional[int] = None,
                 size: Optional[int] = None, max_workers: int = 1) -> ImageDataset:
    """`synthetic`, `synthetic-hf` (chỉ grating) hoặc đường dẫn thư mục"""
    if source in (SYNTHETIC_SOURCE, SYNTHETIC_HF_SOURCE):
        spec = SyntheticDatasetSpec(
            seed=seed,
            count=count or config.SYNTHETIC_COUNT,
            size=size or config.SYNTHETIC_SIZE,
            mix=HIGH_FREQ_MIX if source == SYNTHETIC_HF_SOURCE else GENERATORS,
        )
        return ImageDataset.from_synthetic(spec)
    return ImageDataset.from_directory(source, max_workers=max_workers)


# ---------------- calibration ----------------
@dataclass
class CalibrationSet:
    """Patch LR theo thứ tự cố định; `patch_ids` = (chỉ số ảnh, y, x) của từng patch"""
    patches: List[np.ndarray]
    patch_ids: List[Tuple[int, int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.patches)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.patches[index]


def sample_calibration(dataset: Sequence[np.ndarray], n: int = config.CALIB_SAMPLES,
                       patch: int = config.CALIB_PATCH, seed: int = 0, scale: int = 4) -> CalibrationSet:
    """
    Patch i lấy từ ảnh LR thứ (i mod số ảnh đủ lớn), vị trí ngẫu nhiên theo
    substream ('calibration', i). Chỉ giữ LR.
    """
    if n < 1:
        raise CalibrationError(f"số patch calibration phải >= 1, nhận {n}")
    lrs = [degrade(hr, scale) for hr in dataset]
    eligible = [i for i, lr in enumerate(lrs) if min(lr.shape[-2:]) >= patch]
    if not eligible:
        raise CalibrationError(
            f"không có ảnh LR nào đủ {patch}x{patch}: {len(lrs)}/{len(lrs)} ảnh quá nhỏ"
        )
    if len(eligible) < len(lrs):
        logger.warning(f"⚠️ Bỏ qua {len(lrs) - len(eligible)} ảnh nhỏ hơn patch {patch}")

    streams = SeedStreams(seed)
    patches, ids = [], []
    for i in range(n):
        index = eligible[i % len(eligible)]
        lr = lrs[index]
        rng = streams.generator('calibration', i)
        y = int(rng.integers(0, lr.shape[-2] - patch + 1))
        x = int(rng.integers(0, lr.shape[-1] - patch + 1))
        patches.append(np.ascontiguousarray(lr[:, y:y + patch, x:x + patch]))
        ids.append((index, y, x))
    return CalibrationSet(patches=patches, patch_ids=ids)


# ---------------- training patches ----------------
def augment(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Lật ngang / lật dọc / xoay 90° ngẫu nhiên"""
    if rng.random() < 0.5:
        image = image[..., ::-1]
    if rng.random() < 0.5:
        image = image[..., ::-1, :]
    if rng.random() < 0.5:
        image = np.swapaxes(image, -1, -2)
    return np.ascontiguousarray(image)


class PatchSampler:
    """Batch (LR, HR) cho bước huấn luyện `step`, tất định theo seed"""

    def __init__(self, dataset: Sequence[np.ndarray], scale: int, patch: int, batch: int, seed: int = 0):
        self.images = [crop_to_multiple(img, scale) for img in dataset]
        self.scale = scale
        self.patch = patch
        self.batch = batch
        self.streams = SeedStreams(seed)
        hr_patch = patch * scale
        self.eligible = [i for i, img in enumerate(self.images) if min(img.shape[-2:]) >= hr_patch]
        if not self.eligible:
            raise DatasetError(f"không có ảnh HR nào đủ {hr_patch}x{hr_patch} cho patch LR {patch}")

    def sample(self, step: int) -> Tuple[np.ndarray, np.ndarray]:
        rng = self.streams.generator('train', step)
        hr_patch = self.patch * self.scale
        hrs = []
        for _ in range(self.batch):
            img = self.images[self.eligible[int(rng.integers(0, len(self.eligible)))]]
            y = int(rng.integers(0, img.shape[-2] - hr_patch + 1))
            x = int(rng.integers(0, img.shape[-1] - hr_patch + 1))
            hrs.append(augment(img[:, y:y + hr_patch, x:x + hr_patch], rng))
        hr = np.stack(hrs).astype(np.float32)
        return degrade(hr, self.scale).astype(np.float32), hr
