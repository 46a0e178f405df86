"""
Các khối của CRAFT
- HFERB: nhánh conv 3×3 (LFE) + nhánh max-pool → conv 1×1 (HFE), ghép và fuse 1×1, cộng skip
- SRWAB: attention cửa sổ chữ nhật (4×16 / 16×4) chia theo hai nhóm head, có shift, không mask
- HFB: attention theo chiều kênh, Q từ HFERB, K/V từ SRWAB, sau đó gated FFN
- CRFB = HFERB ∥ (SRWAB × n) → HFB;  RCRFG = CRFB × n → conv 3×3 + skip
"""

import logging
from typing import Tuple

import numpy as np

from autograd import functional as F
from autograd.tape import Var, as_var
from core.tensor import TensorShapeError
from models.craft_config import CraftConfig, CraftConfigError
from models.layers import Module, ModuleRoot

logger = logging.getLogger(__name__)


# --------------------------------------------------
# HFERB
# --------------------------------------------------
class HFERB(Module):
    def __init__(self, root: ModuleRoot, prefix: str, channels: int):
        super().__init__(root, prefix)
        if channels % 2:
            raise CraftConfigError(f"HFERB cần số kênh chẵn, nhận {channels}")
        self.channels = channels
        half = channels // 2
        self.add_conv('lfe', half, half, 3)
        self.add_conv('hfe', half, half, 1)
        self.add_conv('fuse', channels, channels, 1)

    def forward(self, x) -> Var:
        x = as_var(x)
        if x.shape[1] != self.channels:
            raise TensorShapeError(f"HFERB cần {self.channels} kênh, nhận {tuple(x.shape)}")
        low, high = F.split(x, 2, axis=1)
        low = F.gelu(self.conv('lfe', low, padding=1))
        high = F.max_pool2d(high, kernel=3, stride=1, padding=1)
        high = F.gelu(self.conv('hfe', high))
        return F.add(self.conv('fuse', F.concat([low, high], axis=1)), x)


# --------------------------------------------------
# SRWAB
# --------------------------------------------------
def window_partition(x: Var, heads: int, wh: int, ww: int) -> Var:
    """(N, heads·d, H, W) → (N·nH·nW, heads, wh·ww, d)"""
    n, c, h, w = x.shape
    d = c // heads
    t = F.reshape(x, (n, heads, d, h // wh, wh, w // ww, ww))
    t = F.transpose(t, (0, 3, 5, 1, 4, 6, 2))
    return F.reshape(t, (n * (h // wh) * (w // ww), heads, wh * ww, d))


def window_reverse(t: Var, shape: Tuple[int, int, int, int], heads: int, wh: int, ww: int) -> Var:
    n, c, h, w = shape
    d = c // heads
    t = F.reshape(t, (n, h // wh, w // ww, heads, wh, ww, d))
    t = F.transpose(t, (0, 3, 6, 1, 4, 2, 5))
    return F.reshape(t, (n, c, h, w))


def relative_offsets(wh: int, ww: int) -> Tuple[np.ndarray, np.ndarray]:
    """Bảng offset (Δy, Δx) chuẩn hóa và chỉ số (T·T,) tra bảng cho từng cặp token"""
    dy, dx = np.meshgrid(np.arange(-wh + 1, wh), np.arange(-ww + 1, ww), indexing='ij')
    table = np.stack([dy.ravel() / max(wh - 1, 1), dx.ravel() / max(ww - 1, 1)], axis=1)
    coords = np.stack(np.meshgrid(np.arange(wh), np.arange(ww), indexing='ij'), axis=-1).reshape(-1, 2)
    rel = coords[:, None, :] - coords[None, :, :]
    index = (rel[..., 0] + wh - 1) * (2 * ww - 1) + (rel[..., 1] + ww - 1)
    return table, index.ravel()


class SRWAB(Module):
    def __init__(self, root: ModuleRoot, prefix: str, config: CraftConfig):
        super().__init__(root, prefix)
        c = config.channels
        if c % config.heads:
            raise CraftConfigError(f"channels={c} không chia hết cho heads={config.heads}")
        self.channels = c
        self.heads = config.heads
        self.group_heads = config.heads // 2
        self.head_dim = config.head_dim
        self.windows = config.windows
        self.multiple = config.pad_multiple
        self.add_norm('norm1', c)
        self.add_conv('qkv', c, 3 * c, 1, init='trunc_normal')
        self.add_conv('v_conv', c, c, 3, groups=c)
        for g in range(2):
            self.add_linear(f"pos{g}.fc1", 2, config.pos_hidden)
            self.add_linear(f"pos{g}.fc2", config.pos_hidden, self.group_heads)
        self.add_conv('proj', c, c, 1, init='trunc_normal')
        self.add_norm('norm2', c)
        self.add_conv('mlp.fc1', c, config.mlp_hidden, 1, init='trunc_normal')
        self.add_conv('mlp.fc2', config.mlp_hidden, c, 1, init='trunc_normal')
        self._offsets = [relative_offsets(wh, ww) for wh, ww in self.windows]

    def position_bias(self, group: int) -> Var:
        """MLP 2 lớp ánh xạ offset tương đối → bias (heads/2, T, T)"""
        wh, ww = self.windows[group]
        table, index = self._offsets[group]
        hidden = F.gelu(self.linear(f"pos{group}.fc1", table.astype(self.root.dtype)))
        bias = self.linear(f"pos{group}.fc2", hidden)
        t = wh * ww
        bias = F.reshape(F.gather(bias, index, axis=0), (t, t, self.group_heads))
        return F.transpose(bias, (2, 0, 1))

    def window_attention(self, group: int, q: Var, k: Var, v: Var) -> Var:
        """softmax(QKᵀ/√d + B)·V trong từng cửa sổ của nhóm head `group`"""
        wh, ww = self.windows[group]
        shape = q.shape
        qw = window_partition(q, self.group_heads, wh, ww)
        kw = window_partition(k, self.group_heads, wh, ww)
        vw = window_partition(v, self.group_heads, wh, ww)
        qw = F.mul(qw, self.head_dim ** -0.5)
        logits = self.matmul(f"attn{group}.qk", qw, F.swap_last(kw))
        probs = F.softmax(F.add(logits, self.position_bias(group)), axis=-1)
        out = self.matmul(f"attn{group}.pv", probs, vw)
        return window_reverse(out, shape, self.group_heads, wh, ww)

    def forward(self, x, shifted: bool = False) -> Var:
        x = as_var(x)
        n, c, h, w = x.shape
        if c != self.channels:
            raise TensorShapeError(f"SRWAB cần {self.channels} kênh, nhận {tuple(x.shape)}")
        pad_h = (-h) % self.multiple
        pad_w = (-w) % self.multiple
        xp = F.reflect_pad(x, pad_h, pad_w)

        qkv = self.conv('qkv', self.norm('norm1', xp))
        q, k, v = F.split(qkv, 3, axis=1)
        local = self.conv('v_conv', v, padding=1, groups=c)

        half = c // 2
        outs = []
        for group, (wh, ww) in enumerate(self.windows):
            parts = [F.slice_axis(t, group * half, (group + 1) * half, axis=1) for t in (q, k, v)]
            if shifted:
                parts = [F.roll(t, (-(wh // 2), -(ww // 2)), (2, 3)) for t in parts]
            out = self.window_attention(group, *parts)
            if shifted:
                out = F.roll(out, (wh // 2, ww // 2), (2, 3))
            outs.append(out)

        attn = self.conv('proj', F.add(F.concat(outs, axis=1), local))
        y = F.add(xp, attn)
        hidden = F.gelu(self.conv('mlp.fc1', self.norm('norm2', y)))
        y = F.add(y, self.conv('mlp.fc2', hidden))
        return F.crop(y, h, w)


# --------------------------------------------------
# HFB
# --------------------------------------------------
class HFB(Module):
    def __init__(self, root: ModuleRoot, prefix: str, config: CraftConfig):
        super().__init__(root, prefix)
        c = config.channels
        hidden = config.imlp_hidden
        self.channels = c
        self.add_norm('norm_s', c)
        for branch in ('q', 'k', 'v'):
            self.add_conv(branch, c, c, 1, bias=False)
            self.add_conv(f"{branch}_dw", c, c, 3, bias=False, groups=c)
        self.add_conv('proj', c, c, 1, bias=False)
        self.root.register(self.full('log_alpha'), np.zeros(1))
        self.add_norm('norm_f', c)
        self.add_conv('ffn.in1', c, hidden, 1, bias=False)
        self.add_conv('ffn.in2', c, hidden, 1, bias=False)
        self.add_conv('ffn.dw1', hidden, hidden, 3, bias=False, groups=hidden)
        self.add_conv('ffn.dw2', hidden, hidden, 3, bias=False, groups=hidden)
        self.add_conv('ffn.out', hidden, c, 1, bias=False)
        self.hidden = hidden

    def _branch(self, name: str, x: Var) -> Var:
        return self.conv(f"{name}_dw", self.conv(name, x), padding=1, groups=self.channels)

    def channel_attention(self, x_s, x_h) -> Tuple[Var, Var]:
        """Trả về (ma trận attention N×C×C, V dạng N×C×HW)"""
        x_s, x_h = as_var(x_s), as_var(x_h)
        if x_s.shape != x_h.shape:
            raise TensorShapeError(f"X_S {tuple(x_s.shape)} và X_H {tuple(x_h.shape)} phải cùng shape")
        n, c, h, w = x_s.shape
        normed = self.norm('norm_s', x_s)
        q = F.reshape(self._branch('q', x_h), (n, c, h * w))
        k = F.reshape(self._branch('k', normed), (n, c, h * w))
        v = F.reshape(self._branch('v', normed), (n, c, h * w))
        q = F.l2_normalize(q, axis=-1)
        k = F.l2_normalize(k, axis=-1)
        alpha = F.exp(self.param('log_alpha'))
        logits = F.div(self.matmul('attn.qk', q, F.swap_last(k)), alpha)
        return F.softmax(logits, axis=-1), v

    def ffn(self, x: Var) -> Var:
        a = self.conv('ffn.dw1', self.conv('ffn.in1', x), padding=1, groups=self.hidden)
        b = self.conv('ffn.dw2', self.conv('ffn.in2', x), padding=1, groups=self.hidden)
        return self.conv('ffn.out', F.mul(F.gelu(a), b))

    def forward(self, x_s, x_h) -> Var:
        x_s = as_var(x_s)
        n, c, h, w = x_s.shape
        probs, v = self.channel_attention(x_s, x_h)
        attn = F.reshape(self.matmul('attn.pv', probs, v), (n, c, h, w))
        fused = F.add(self.conv('proj', attn), x_s)
        return F.add(fused, self.ffn(self.norm('norm_f', fused)))


# --------------------------------------------------
# CRFB / RCRFG
# --------------------------------------------------
class CRFB(Module):
    def __init__(self, root: ModuleRoot, prefix: str, config: CraftConfig):
        super().__init__(root, prefix)
        self.hferb = HFERB(root, self.full('hferb'), config.channels)
        self.srwabs = [SRWAB(root, self.full(f"srwab.{i}"), config)
                       for i in range(config.n_srwab_per_crfb)]
        self.hfb = HFB(root, self.full('hfb'), config)

    def forward(self, x) -> Var:
        x = as_var(x)
        x_h = self.hferb.forward(x)
        x_s = x
        for i, block in enumerate(self.srwabs):
            # khối lẻ dùng cửa sổ dịch nửa extent
            x_s = block.forward(x_s, shifted=bool(i % 2))
        return self.hfb.forward(x_s, x_h)


class RCRFG(Module):
    def __init__(self, root: ModuleRoot, prefix: str, config: CraftConfig):
        super().__init__(root, prefix)
        c = config.channels
        self.blocks = [CRFB(root, self.full(f"blocks.{i}"), config)
                       for i in range(config.n_crfb_per_rcrfg)]
        self.add_conv('conv', c, c, 3)

    def forward(self, x) -> Var:
        x = as_var(x)
        y = x
        for block in self.blocks:
            y = block.forward(y)
        return F.add(self.conv('conv', y, padding=1), x)
