"""
Đọc / ghi ảnh RGB 8-bit (PPM P6, PNG) qua Pillow
Tensor ảnh trong toàn bộ dự án có dạng (3, H, W), float32, giá trị [0, 1].
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

logger = logging.getLogger(__name__)

SUPPORTED_SUFFIXES = ('.ppm', '.png')
PathLike = Union[str, Path]


class ImageCodecError(ValueError):
    """Lỗi đọc / ghi ảnh"""
    pass


@dataclass
class ImageBuffer:
    """Ảnh RGB 8-bit, samples có shape (H, W, 3) kiểu uint8"""
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.ndim != 3 or self.samples.shape[2] != 3:
            raise ImageCodecError(f"cần ảnh (H, W, 3), nhận {tuple(self.samples.shape)}")
        if self.samples.dtype != np.uint8:
            raise ImageCodecError(f"cần mẫu 8-bit, nhận {self.samples.dtype}")

    @property
    def height(self) -> int:
        return int(self.samples.shape[0])

    @property
    def width(self) -> int:
        return int(self.samples.shape[1])

    def to_tensor(self) -> np.ndarray:
        return np.ascontiguousarray(self.samples.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0)

    @classmethod
    def from_tensor(cls, image: np.ndarray) -> 'ImageBuffer':
        """(3, H, W) trong [0, 1] → 8-bit; làm tròn half-to-even, kẹp về [0, 255]"""
        if image.ndim != 3 or image.shape[0] != 3:
            raise ImageCodecError(f"cần tensor (3, H, W), nhận {tuple(image.shape)}")
        scaled = np.clip(np.rint(image.astype(np.float64) * 255.0), 0, 255)
        return cls(np.ascontiguousarray(scaled.astype(np.uint8).transpose(1, 2, 0)))


def _check_suffix(path: Path):
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ImageCodecError(f"định dạng không hỗ trợ: {path.suffix} (chỉ {', '.join(SUPPORTED_SUFFIXES)})")


def read_image(path: PathLike) -> ImageBuffer:
    path = Path(path)
    _check_suffix(path)
    try:
        with Image.open(path) as img:
            if img.mode != 'RGB':
                img = img.convert('RGB')
            return ImageBuffer(np.array(img, dtype=np.uint8))
    except FileNotFoundError:
        raise ImageCodecError(f"không tìm thấy ảnh: {path}")
    except (UnidentifiedImageError, OSError) as e:
        raise ImageCodecError(f"không đọc được ảnh {path}: {e}")


def write_image(buffer: ImageBuffer, path: PathLike):
    path = Path(path)
    _check_suffix(path)
    fmt = 'PPM' if path.suffix.lower() == '.ppm' else 'PNG'
    try:
        Image.fromarray(buffer.samples).save(path, format=fmt)
    except OSError as e:
        raise ImageCodecError(f"không ghi được ảnh {path}: {e}")
    logger.debug(f"Đã ghi {fmt} {buffer.width}x{buffer.height} → {path}")


def load_tensor(path: PathLike) -> np.ndarray:
    return read_image(path).to_tensor()


def save_tensor(image: np.ndarray, path: PathLike):
    write_image(ImageBuffer.from_tensor(image), path)
