"""4-bit NormalFloat (NF4) block quantization with double-quantized scales.

Weights are split into blocks of 64 values, scaled by the block absmax,
and each value is mapped to the nearest of the 16 NF4 levels (the
information-theoretically optimal code points for normally distributed
data).  Codes are packed two per byte.  The per-block absmax scales are
themselves quantized to int8 against a per-group (256 blocks) float32
scale, which is what "double quantization" buys.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

NF4_LEVELS = torch.tensor(
    [
        -1.0,
        -0.6961928009986877,
        -0.5250730514526367,
        -0.39491748809814453,
        -0.28444138169288635,
        -0.18477343022823334,
        -0.09105003625154495,
        0.0,
        0.07958029955625534,
        0.16093020141124725,
        0.24611230194568634,
        0.33791524171829224,
        0.44070982933044434,
        0.5626170039176941,
        0.7229568362236023,
        1.0,
    ],
    dtype=torch.float32,
)

BLOCK_SIZE = 64
SCALE_GROUP = 256


@dataclass
class QuantizedTensor:
    packed: torch.Tensor        # uint8, two 4-bit codes per byte
    scale_codes: torch.Tensor   # int8 quantized per-block absmax
    group_scales: torch.Tensor  # float32 per-group scale for scale_codes
    shape: tuple[int, ...]
    count: int                  # number of real values (pre-padding)

    def numbytes(self) -> int:
        return (
            self.packed.numel()
            + self.scale_codes.numel()
            + self.group_scales.numel() * 4
        )


def _quantize_scales(scales: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    groups = scales.split(SCALE_GROUP)
    codes, group_scales = [], []
    for group in groups:
        absmax = float(group.abs().max())
        scale = absmax / 127.0 if absmax > 0 else 1.0
        codes.append(torch.clamp(torch.round(group / scale), -127, 127).to(torch.int8))
        group_scales.append(scale)
    return torch.cat(codes), torch.tensor(group_scales, dtype=torch.float32)


def _dequantize_scales(scale_codes: torch.Tensor, group_scales: torch.Tensor) -> torch.Tensor:
    groups = scale_codes.split(SCALE_GROUP)
    return torch.cat(
        [group.to(torch.float32) * group_scales[i] for i, group in enumerate(groups)]
    )


def quantize_nf4(tensor: torch.Tensor) -> QuantizedTensor:
    flat = tensor.detach().to(torch.float32).reshape(-1)
    count = flat.numel()
    pad = (-count) % BLOCK_SIZE
    if pad:
        flat = torch.cat([flat, torch.zeros(pad)])
    blocks = flat.reshape(-1, BLOCK_SIZE)
    absmax = blocks.abs().amax(dim=1)
    safe = torch.where(absmax > 0, absmax, torch.ones_like(absmax))
    normalized = blocks / safe.unsqueeze(1)
    codes = (normalized.unsqueeze(2) - NF4_LEVELS.view(1, 1, -1)).abs().argmin(dim=2)
    codes = codes.to(torch.uint8).reshape(-1)
    packed = (codes[0::2] << 4) | codes[1::2]
    scale_codes, group_scales = _quantize_scales(absmax)
    return QuantizedTensor(
        packed=packed,
        scale_codes=scale_codes,
        group_scales=group_scales,
        shape=tuple(tensor.shape),
        count=count,
    )


def dequantize_nf4(quantized: QuantizedTensor) -> torch.Tensor:
    packed = quantized.packed
    high = (packed >> 4).to(torch.long)
    low = (packed & 0x0F).to(torch.long)
    codes = torch.stack([high, low], dim=1).reshape(-1)
    scales = _dequantize_scales(quantized.scale_codes, quantized.group_scales)
    values = NF4_LEVELS[codes].reshape(-1, BLOCK_SIZE) * scales.unsqueeze(1)
    return values.reshape(-1)[: quantized.count].reshape(quantized.shape)


def nf4_round_trip(tensor: torch.Tensor) -> torch.Tensor:
    """Quantize then dequantize; the values land on the scaled NF4 grid."""
    return dequantize_nf4(quantize_nf4(tensor))
