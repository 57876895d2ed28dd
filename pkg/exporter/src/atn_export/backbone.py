"""Backbone runners: things that turn an image into per-block attention.

A runner maps an RGB image to multi-head self-attention tensors, one per
named UNet block.  The packaged runner drives pretrained Stable Diffusion 2
through one deterministic denoising step (no added noise, empty prompt);
tests substitute a stub.  The heavy ML imports happen lazily inside
``load_sd_backbone`` so this package imports cleanly without them.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .errors import BackboneUnavailableError, ExportError

MODEL_ID = "stabilityai/stable-diffusion-2-base"

# Block names by feature-map resolution, highest first on each path.  The
# concrete module paths below target the diffusers UNet2DConditionModel
# layout of SD2; the mapping used for an export is recorded in the file's
# source_meta so downstream analysis never has to guess.
BLOCK_MODULES = {
    "down0": "down_blocks.0.attentions",
    "down1": "down_blocks.1.attentions",
    "up0": "up_blocks.3.attentions",
    "up1": "up_blocks.2.attentions",
    "up2": "up_blocks.1.attentions",
}
DEFAULT_BLOCKS = {"up0": 0.5, "up1": 0.5}


class BackboneRunner(Protocol):
    """One denoising step's worth of self-attention, per block."""

    def run(self, image: np.ndarray, time_step: int) -> dict[str, np.ndarray]:
        """image: (S, S, 3) float32 in [0,1] -> block id -> (heads, n, n)."""
        ...


def load_sd_backbone(device: str | None = None) -> "BackboneRunner":
    """Load the pretrained diffusion backbone, failing with actionable advice."""
    try:
        import torch  # noqa: F401
        from diffusers import AutoencoderKL, UNet2DConditionModel  # noqa: F401
    except ImportError as e:
        raise BackboneUnavailableError(
            f"the diffusion backbone needs optional dependencies ({e}); "
            "install them with: pip install 'atn-export[sd]'"
        )
    try:
        return _SDRunner(device)
    except (OSError, EnvironmentError) as e:
        raise BackboneUnavailableError(
            f"pretrained weights for {MODEL_ID} are not available locally ({e}); "
            f"download them first, e.g.: huggingface-cli download {MODEL_ID}"
        )


class _SDRunner:
    """Capture self-attention probabilities from one UNet forward pass."""

    def __init__(self, device: str | None = None):
        import torch
        from diffusers import AutoencoderKL, UNet2DConditionModel
        from transformers import CLIPTextModel, CLIPTokenizer

        self.torch = torch
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.vae = AutoencoderKL.from_pretrained(MODEL_ID, subfolder="vae").to(self.device)
        self.unet = UNet2DConditionModel.from_pretrained(MODEL_ID, subfolder="unet").to(
            self.device
        )
        self.tokenizer = CLIPTokenizer.from_pretrained(MODEL_ID, subfolder="tokenizer")
        self.text_encoder = CLIPTextModel.from_pretrained(
            MODEL_ID, subfolder="text_encoder"
        ).to(self.device)
        self.vae.eval()
        self.unet.eval()
        self.text_encoder.eval()

    def _empty_prompt(self):
        tokens = self.tokenizer(
            "", padding="max_length", max_length=self.tokenizer.model_max_length,
            return_tensors="pt",
        ).input_ids.to(self.device)
        with self.torch.no_grad():
            return self.text_encoder(tokens)[0]

    def run(self, image: np.ndarray, time_step: int) -> dict[str, np.ndarray]:
        torch = self.torch
        captured: dict[str, list] = {name: [] for name in BLOCK_MODULES}

        def hook_for(name):
            def hook(module, args, kwargs, output):
                # recompute the softmaxed attention probabilities from the
                # module inputs; diffusers does not expose them on output
                hidden = args[0] if args else kwargs["hidden_states"]
                probs = _attention_probs(module, hidden)
                captured[name].append(probs.detach().to("cpu", torch.float32).numpy())
            return hook

        handles = []
        for name, prefix in BLOCK_MODULES.items():
            for mod_name, module in self.unet.named_modules():
                if mod_name.startswith(prefix) and mod_name.endswith("attn1"):
                    handles.append(
                        module.register_forward_hook(hook_for(name), with_kwargs=True)
                    )
        try:
            pix = torch.from_numpy(image).permute(2, 0, 1)[None].to(self.device)
            pix = pix * 2.0 - 1.0
            with torch.no_grad():
                # deterministic: the posterior mode, no sampled noise
                latents = self.vae.encode(pix).latent_dist.mode()
                latents = latents * self.vae.config.scaling_factor
                t = torch.tensor([time_step], device=self.device)
                self.unet(latents, t, encoder_hidden_states=self._empty_prompt())
        except torch.cuda.OutOfMemoryError as e:
            raise ExportError(
                f"backbone ran out of memory ({e}); try a smaller --attn-size"
            )
        finally:
            for handle in handles:
                handle.remove()
        out = {}
        for name, chunks in captured.items():
            if chunks:
                out[name] = np.mean(chunks, axis=0)  # average repeated layers
        return out


def _attention_probs(attn_module, hidden_states):
    """Softmax(QK^T/sqrt(d)) per head for a diffusers Attention module."""
    import torch

    q = attn_module.to_q(hidden_states)
    k = attn_module.to_k(hidden_states)
    heads = attn_module.heads
    b, n, dim = q.shape
    q = q.reshape(b, n, heads, dim // heads).permute(0, 2, 1, 3)
    k = k.reshape(b, n, heads, dim // heads).permute(0, 2, 1, 3)
    scores = torch.matmul(q, k.transpose(-1, -2)) / (dim // heads) ** 0.5
    return torch.softmax(scores, dim=-1)[0]  # (heads, n, n)
