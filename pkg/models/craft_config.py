"""Siêu tham số kiến trúc CRAFT"""

import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, Tuple


class CraftConfigError(ValueError):
    """Cấu hình kiến trúc không hợp lệ"""
    pass


@dataclass(frozen=True)
class CraftConfig:
    channels: int = 48
    heads: int = 6
    n_rcrfg: int = 4
    n_crfb_per_rcrfg: int = 2
    n_srwab_per_crfb: int = 2
    mlp_ratio: float = 2.0
    imlp_ratio: float = 2.66
    window_a: Tuple[int, int] = (4, 16)
    window_b: Tuple[int, int] = (16, 4)
    scale: int = 4
    in_channels: int = 3

    def __post_init__(self):
        errors = []
        if self.channels < 2 or self.channels % 2:
            errors.append(f"channels={self.channels} phải chẵn")
        if self.heads < 2 or self.heads % 2:
            errors.append(f"heads={self.heads} phải chẵn")
        elif self.channels % self.heads:
            errors.append(f"channels={self.channels} phải chia hết cho heads={self.heads}")
        if self.scale not in (1, 2, 3, 4):
            errors.append(f"scale={self.scale} không hợp lệ")
        for name in ('n_rcrfg', 'n_crfb_per_rcrfg', 'n_srwab_per_crfb'):
            if getattr(self, name) < 0:
                errors.append(f"{name} không được âm")
        if errors:
            raise CraftConfigError("; ".join(errors))

    # ---------------- kích thước suy ra ----------------
    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.channels * self.mlp_ratio))

    @property
    def imlp_hidden(self) -> int:
        return int(math.ceil(round(self.channels * self.imlp_ratio, 6)))

    @property
    def pos_hidden(self) -> int:
        return 4 * self.heads

    @property
    def windows(self) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        return tuple(self.window_a), tuple(self.window_b)

    @property
    def pad_multiple(self) -> int:
        extents = list(self.window_a) + list(self.window_b)
        return math.lcm(*extents)

    # ---------------- serialize ----------------
    def to_kv(self) -> Dict[str, str]:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, (tuple, list)):
                out[key] = "x".join(str(v) for v in value)
            else:
                out[key] = repr(value)
        return out

    @classmethod
    def from_kv(cls, data: Dict[str, str]) -> 'CraftConfig':
        kwargs = {}
        for f in fields(cls):
            if f.name not in data:
                continue
            raw = data[f.name]
            if f.name.startswith('window'):
                kwargs[f.name] = tuple(int(v) for v in raw.split('x'))
            elif f.name.endswith('ratio'):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = int(raw)
        return cls(**kwargs)
