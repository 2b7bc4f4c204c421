"""Low-rank adapter layers and attachment to a frozen (optionally NF4) base."""

from __future__ import annotations

import hashlib
import math

import torch
from torch import nn

from finetuner.quant import nf4_round_trip

ADAPTER_PARAM_MARKERS = ("lora_a", "lora_b")


class LoRALinear(nn.Module):
    """A frozen linear layer plus a trainable rank-r update.

    forward(x) = x @ W_frozen^T + bias + scaling * B(A(dropout(x)))
    where A: in -> r and B: r -> out, B initialized to zero so training
    starts from the base model's function.
    """

    def __init__(self, base: nn.Linear, r: int, alpha: int, dropout: float, quantize: bool):
        super().__init__()
        if not isinstance(base, nn.Linear):
            raise TypeError(f"LoRALinear wraps nn.Linear, got {type(base).__name__}")
        self.in_features = base.in_features
        self.out_features = base.out_features
        self.r = r
        self.scaling = alpha / r
        self.quantized = quantize

        weight = base.weight.data
        if quantize:
            weight = nf4_round_trip(weight)
        self.register_buffer("weight", weight.clone())
        if base.bias is not None:
            self.register_buffer("bias", base.bias.data.clone())
        else:
            self.bias = None

        self.lora_dropout = nn.Dropout(p=dropout)
        self.lora_a = nn.Linear(self.in_features, r, bias=False)
        self.lora_b = nn.Linear(r, self.out_features, bias=False)
        nn.init.kaiming_uniform_(self.lora_a.weight, a=math.sqrt(5))
        nn.init.zeros_(self.lora_b.weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        frozen = nn.functional.linear(x, self.weight, self.bias)
        update = self.lora_b(self.lora_a(self.lora_dropout(x)))
        return frozen + self.scaling * update


def attach_adapters(
    model: nn.Module,
    target_suffixes: tuple[str, ...],
    r: int,
    alpha: int,
    dropout: float,
    quantize: bool,
) -> list[str]:
    """Replace matching nn.Linear modules with LoRALinear, freeze the rest.

    Returns the names of the wrapped modules; raises if none matched.
    """
    targets = []
    for name, module in model.named_modules():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in target_suffixes and isinstance(module, nn.Linear):
            targets.append(name)
    if not targets:
        raise ValueError(f"no modules matching {target_suffixes} found to adapt")

    for name in targets:
        parent_name, _, leaf = name.rpartition(".")
        parent = model.get_submodule(parent_name) if parent_name else model
        base = getattr(parent, leaf)
        setattr(parent, leaf, LoRALinear(base, r=r, alpha=alpha, dropout=dropout, quantize=quantize))

    for param_name, param in model.named_parameters():
        param.requires_grad = any(marker in param_name for marker in ADAPTER_PARAM_MARKERS)
    return targets


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor
        for name, tensor in model.state_dict().items()
        if any(marker in name for marker in ADAPTER_PARAM_MARKERS)
    }


def load_adapter_state(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    missing, unexpected = model.load_state_dict(state, strict=False)
    if unexpected:
        raise ValueError(f"unexpected adapter tensors: {sorted(unexpected)[:5]}")


def trainable_fraction(model: nn.Module) -> float:
    """Trainable / total, counting frozen base weights held as LoRA buffers."""
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    for module in model.modules():
        if isinstance(module, LoRALinear):
            total += module.weight.numel()
            if module.bias is not None:
                total += module.bias.numel()
    return trainable / total


def base_weight_hash(model: nn.Module) -> str:
    """SHA-256 over every non-adapter parameter and buffer, in name order."""
    digest = hashlib.sha256()
    entries = list(model.state_dict().items())
    for name, tensor in sorted(entries, key=lambda item: item[0]):
        if any(marker in name for marker in ADAPTER_PARAM_MARKERS):
            continue
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
