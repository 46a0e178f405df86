"""
Định dạng checkpoint nhị phân (little-endian)

  magic     b"CRFT"
  version   u32 (= 1)
  config    u32 độ dài + văn bản utf-8 dạng key=value mỗi dòng
  tensors   u32 số tensor; mỗi tensor: u32 độ dài tên, tên, u32 rank, u32 × rank extents, f32 payload
  sites     u32 số site; mỗi site: u32 độ dài tên, tên, u8 kind, u8 measure, u32 bits,
            u32 n, f64 × n l, f64 × n u
"""

import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from models.craft import CraftModel
from models.craft_config import CraftConfig, CraftConfigError
from quant.sites import FakeQuantizer, MeasureType, QuantSite, SiteKind

logger = logging.getLogger(__name__)

MAGIC = b"CRFT"
VERSION = 1

_KINDS = [SiteKind.WEIGHT, SiteKind.ACTIVATION]
_MEASURES = [MeasureType.FEATURE, MeasureType.FGO]
_EXTRA_KEYS = ('seed', 'quant.bits', 'quant.io_bits', 'quant.use_fgo', 'quant.per_channel')


class CheckpointError(ValueError):
    """Lỗi đọc / ghi checkpoint"""
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class DuplicateTensorError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: Dict[str, str]
    tensors: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    sites: List[QuantSite] = field(default_factory=list)


# ------------------------------------------------------------------
# ENCODE
# ------------------------------------------------------------------
def _name(text: str) -> bytes:
    raw = text.encode('utf-8')
    return struct.pack('<I', len(raw)) + raw


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack('<I', VERSION)]
    block = "".join(f"{k}={v}\n" for k, v in ckpt.config.items()).encode('utf-8')
    parts.append(struct.pack('<I', len(block)) + block)

    parts.append(struct.pack('<I', len(ckpt.tensors)))
    for name, value in ckpt.tensors.items():
        arr = np.asarray(value, dtype='<f4')
        parts.append(_name(name))
        parts.append(struct.pack(f'<I{arr.ndim}I', arr.ndim, *arr.shape))
        parts.append(arr.tobytes(order='C'))

    parts.append(struct.pack('<I', len(ckpt.sites)))
    for site in ckpt.sites:
        parts.append(_name(site.name))
        parts.append(struct.pack('<BBII', _KINDS.index(site.kind), _MEASURES.index(site.measure),
                                 site.bits, site.l.size))
        parts.append(np.asarray(site.l, dtype='<f8').tobytes())
        parts.append(np.asarray(site.u, dtype='<f8').tobytes())
    return b"".join(parts)


# ------------------------------------------------------------------
# DECODE
# ------------------------------------------------------------------
class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint bị cắt: cần {n} byte tại offset {self.pos}, còn {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack('<I', self.take(4))[0]

    def text(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode('utf-8')
        except UnicodeDecodeError:
            raise CorruptCheckpointError(f"tên không phải utf-8 tại offset {self.pos}")

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(size * count), dtype=dtype).copy()


def _parse_config(text: str) -> Dict[str, str]:
    out = OrderedDict()
    for line in text.splitlines():
        if not line:
            continue
        if '=' not in line:
            raise CorruptCheckpointError(f"dòng config sai định dạng: '{line}'")
        key, value = line.split('=', 1)
        out[key] = value
    return out


def decode_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpointError("magic không khớp, không phải checkpoint CRFT")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointVersionError(f"phiên bản checkpoint {version} không được hỗ trợ (chỉ {VERSION})")

    config = _parse_config(reader.text())
    known = {f for f in CraftConfig.__dataclass_fields__} | set(_EXTRA_KEYS)
    unknown = [k for k in config if k not in known]
    if unknown:
        raise CheckpointVersionError(f"trường config không xác định: {unknown}")

    tensors: Dict[str, np.ndarray] = OrderedDict()
    for _ in range(reader.u32()):
        name = reader.text()
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        value = reader.array('<f4', int(np.prod(shape, dtype=np.int64))).reshape(shape)
        if name in tensors:
            raise DuplicateTensorError(f"tensor trùng tên: '{name}'")
        tensors[name] = value.astype(np.float32)

    sites = []
    for _ in range(reader.u32()):
        name = reader.text()
        kind, measure = reader.u8(), reader.u8()
        bits, n = reader.u32(), reader.u32()
        if kind >= len(_KINDS) or measure >= len(_MEASURES):
            raise CorruptCheckpointError(f"site '{name}': kind/measure không hợp lệ ({kind}, {measure})")
        l = reader.array('<f8', n)
        u = reader.array('<f8', n)
        sites.append(QuantSite(name=name, kind=_KINDS[kind], measure=_MEASURES[measure],
                               l=l, u=u, bits=bits))

    if reader.pos != len(data):
        raise CorruptCheckpointError(f"thừa {len(data) - reader.pos} byte sau bảng site")
    return Checkpoint(config=config, tensors=tensors, sites=sites)


# ------------------------------------------------------------------
# MODEL I/O
# ------------------------------------------------------------------
def save_checkpoint(model: CraftModel, path, quantizer: Optional[FakeQuantizer] = None):
    quantizer = quantizer if quantizer is not None else model.quantizer
    config = OrderedDict(model.config.to_kv())
    config['seed'] = str(model.seed)
    sites: List[QuantSite] = []
    if quantizer is not None and quantizer.sites:
        config['quant.bits'] = str(quantizer.bits)
        config['quant.io_bits'] = str(quantizer.io_bits)
        config['quant.use_fgo'] = str(int(quantizer.use_fgo))
        config['quant.per_channel'] = str(int(quantizer.per_channel_weights))
        sites = list(quantizer.sites.values())

    data = encode_checkpoint(Checkpoint(config=config, tensors=model.state_dict(), sites=sites))
    path = Path(path)
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'wb') as f:
        f.write(data)
    os.replace(tmp, path)
    logger.info(f"💾 Lưu checkpoint {path} ({len(data)} byte, {len(sites)} site lượng tử)")


def read_checkpoint(path) -> Checkpoint:
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except FileNotFoundError:
        raise CheckpointError(f"không tìm thấy checkpoint: {path}")
    return decode_checkpoint(data)


def load_checkpoint(path) -> CraftModel:
    """CraftModel với trọng số đã nạp; có bảng site thì gắn sẵn FakeQuantizer ở chế độ QUANTIZE"""
    ckpt = read_checkpoint(path)
    try:
        config = CraftConfig.from_kv(ckpt.config)
    except (CraftConfigError, ValueError) as e:
        raise CorruptCheckpointError(f"config trong checkpoint không hợp lệ: {e}")

    quantizer = None
    if ckpt.sites:
        quantizer = FakeQuantizer(
            bits=int(ckpt.config.get('quant.bits', 8)),
            io_bits=int(ckpt.config.get('quant.io_bits', 8)),
            use_fgo=bool(int(ckpt.config.get('quant.use_fgo', 1))),
            per_channel_weights=bool(int(ckpt.config.get('quant.per_channel', 0))),
        )
        quantizer.load_sites(ckpt.sites)

    model = CraftModel(config, seed=int(ckpt.config.get('seed', 0)), quantizer=quantizer)
    try:
        model.load_state_dict(ckpt.tensors)
    except CraftConfigError as e:
        raise CorruptCheckpointError(f"bảng tensor không khớp kiến trúc: {e}")
    return model
