"""
Đếm giải tích số tham số và FLOPs của CRAFT
Quy ước FLOPs = 2 × MAC; bỏ qua bias và op theo phần tử.

- `macs_at` / `flops_at`: conv, linear và tích attention kênh của HFB, không tính
  tích QKᵀ, P·V trong cửa sổ SRWAB. Đây là con số đối chiếu với bảng độ phức tạp.
- `full_macs_at` / `full_flops_at`: mọi conv / matmul mà forward thực sự chạy.
"""

from dataclasses import dataclass, field
from typing import Dict

from models.craft_config import CraftConfig


def _conv(cin: int, cout: int, k: int, bias: bool = True, groups: int = 1) -> int:
    return cout * (cin // groups) * k * k + (cout if bias else 0)


def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


@dataclass
class ComplexityReport:
    config: CraftConfig
    param_count: int
    params_by_block: Dict[str, int] = field(default_factory=dict)

    def macs_at(self, out_h: int, out_w: int) -> int:
        return _macs(self.config, out_h, out_w, window_attention=False)

    def flops_at(self, out_h: int, out_w: int) -> int:
        return 2 * self.macs_at(out_h, out_w)

    def full_macs_at(self, out_h: int, out_w: int) -> int:
        return _macs(self.config, out_h, out_w, window_attention=True)

    def full_flops_at(self, out_h: int, out_w: int) -> int:
        return 2 * self.full_macs_at(out_h, out_w)


def block_params(config: CraftConfig) -> Dict[str, int]:
    c = config.channels
    half = c // 2
    hm, hf, hp = config.mlp_hidden, config.imlp_hidden, config.pos_hidden
    group_heads = config.heads // 2

    hferb = _conv(half, half, 3) + _conv(half, half, 1) + _conv(c, c, 1)
    pos = 2 * (_conv(2, hp, 1) + _conv(hp, group_heads, 1))
    srwab = (2 * c + _conv(c, 3 * c, 1) + _conv(c, c, 3, groups=c) + pos + _conv(c, c, 1)
             + 2 * c + _conv(c, hm, 1) + _conv(hm, c, 1))
    hfb = (2 * c + 3 * _conv(c, c, 1, bias=False) + 3 * _conv(c, c, 3, bias=False, groups=c)
           + _conv(c, c, 1, bias=False) + 1 + 2 * c
           + 2 * _conv(c, hf, 1, bias=False) + 2 * _conv(hf, hf, 3, bias=False, groups=hf)
           + _conv(hf, c, 1, bias=False))
    crfb = hferb + config.n_srwab_per_crfb * srwab + hfb
    rcrfg = config.n_crfb_per_rcrfg * crfb + _conv(c, c, 3)
    return {
        'shallow': _conv(config.in_channels, c, 3),
        'hferb': hferb,
        'srwab': srwab,
        'hfb': hfb,
        'crfb': crfb,
        'rcrfg': rcrfg,
        'aggregate': _conv(c, c, 3) if config.n_rcrfg else 0,
        'reconstruct': _conv(c, config.in_channels * config.scale ** 2, 3),
    }


def _macs(config: CraftConfig, out_h: int, out_w: int, window_attention: bool) -> int:
    c = config.channels
    half = c // 2
    hm, hf, hp = config.mlp_hidden, config.imlp_hidden, config.pos_hidden
    group_heads = config.heads // 2
    h, w = out_h // config.scale, out_w // config.scale
    pixels = h * w
    multiple = config.pad_multiple
    body = _round_up(h, multiple) * _round_up(w, multiple)

    hferb = (half * half * 9 + half * half + c * c) * body
    tokens = [wh * ww for wh, ww in config.windows]
    # QKᵀ và P·V cho mỗi nhóm head (C/2 kênh, T token mỗi cửa sổ)
    attn = sum(2 * t * half for t in tokens) * body if window_attention else 0
    pos = sum((2 * wh - 1) * (2 * ww - 1) * (2 * hp + hp * group_heads) for wh, ww in config.windows)
    srwab = (3 * c * c + 9 * c + c * c + 2 * c * hm) * body + attn + pos
    hfb = (3 * c * c + 27 * c + c * c + 2 * c * c + 2 * c * hf + 18 * hf + hf * c) * body
    crfb = hferb + config.n_srwab_per_crfb * srwab + hfb
    rcrfg = config.n_crfb_per_rcrfg * crfb + 9 * c * c * body

    total = 9 * config.in_channels * c * body
    if config.n_rcrfg:
        total += config.n_rcrfg * rcrfg + 9 * c * c * body
    total += 9 * c * config.in_channels * config.scale ** 2 * pixels
    return total


def complexity_report(config: CraftConfig) -> ComplexityReport:
    blocks = block_params(config)
    total = blocks['shallow'] + blocks['aggregate'] + blocks['reconstruct']
    total += config.n_rcrfg * blocks['rcrfg']
    return ComplexityReport(config=config, param_count=total, params_by_block=blocks)


def ablation_param_counts(config: CraftConfig) -> Dict[str, int]:
    """Số tham số khi bỏ từng thành phần khỏi mỗi CRFB (HFERB / SRWAB / HFB)"""
    report = complexity_report(config)
    blocks = report.params_by_block
    crfbs = config.n_rcrfg * config.n_crfb_per_rcrfg
    return {
        'full': report.param_count,
        'without_hferb': report.param_count - crfbs * blocks['hferb'],
        'without_srwab': report.param_count - crfbs * config.n_srwab_per_crfb * blocks['srwab'],
        'without_hfb': report.param_count - crfbs * blocks['hfb'],
    }
