"""NF4 quantization: grid fidelity, round-trip error bounds, packing."""

from __future__ import annotations

import torch

from finetuner.quant import BLOCK_SIZE, NF4_LEVELS, dequantize_nf4, nf4_round_trip, quantize_nf4


def test_levels_are_the_published_sixteen():
    assert NF4_LEVELS.shape == (16,)
    assert NF4_LEVELS[0] == -1.0 and NF4_LEVELS[-1] == 1.0
    assert NF4_LEVELS[7] == 0.0
    assert torch.all(NF4_LEVELS[1:] > NF4_LEVELS[:-1])


def test_round_trip_error_bounded_by_grid_gap():
    torch.manual_seed(0)
    tensor = torch.randn(300, 50)
    restored = nf4_round_trip(tensor)
    assert restored.shape == tensor.shape
    flat = tensor.reshape(-1)
    pad = (-flat.numel()) % BLOCK_SIZE
    padded = torch.cat([flat, torch.zeros(pad)]).reshape(-1, BLOCK_SIZE)
    absmax = padded.abs().amax(dim=1)
    half_gap = float((NF4_LEVELS[1:] - NF4_LEVELS[:-1]).max()) / 2
    # Per-block bound: nearest-level error plus 1% slack for the quantized scales.
    bound = absmax * half_gap + absmax * 0.01
    err = (padded - nf4_round_trip(padded)).abs().amax(dim=1)
    assert torch.all(err <= bound + 1e-6)


def test_values_land_on_scaled_grid():
    torch.manual_seed(1)
    tensor = torch.randn(BLOCK_SIZE)
    quantized = quantize_nf4(tensor)
    restored = dequantize_nf4(quantized)
    scale = restored.abs().max()  # level 1.0 maps to the (dequantized) absmax
    normalized = restored / scale
    distances = (normalized.unsqueeze(1) - NF4_LEVELS.view(1, -1)).abs().min(dim=1).values
    assert torch.all(distances < 1e-5)


def test_packing_two_codes_per_byte():
    tensor = torch.randn(4, BLOCK_SIZE)
    quantized = quantize_nf4(tensor)
    assert quantized.packed.dtype == torch.uint8
    assert quantized.packed.numel() == tensor.numel() // 2


def test_non_multiple_of_block_size():
    tensor = torch.randn(BLOCK_SIZE + 7)
    restored = nf4_round_trip(tensor)
    assert restored.shape == tensor.shape


def test_zero_tensor_round_trips_to_zero():
    tensor = torch.zeros(2 * BLOCK_SIZE)
    assert torch.all(nf4_round_trip(tensor) == 0.0)


def test_extremes_are_exact():
    # absmax values sit exactly on the +/-1 levels, up to scale quantization.
    tensor = torch.linspace(-3.0, 3.0, BLOCK_SIZE)
    restored = nf4_round_trip(tensor)
    assert torch.isclose(restored.min(), torch.tensor(-3.0), rtol=0.01)
    assert torch.isclose(restored.max(), torch.tensor(3.0), rtol=0.01)
