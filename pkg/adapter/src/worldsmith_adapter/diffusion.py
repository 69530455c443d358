"""Latent-diffusion pipeline. Needs the ``diffusion`` extra (torch,
diffusers, transformers) plus reachable model weights; everything heavy is
imported at construction time so the rest of the package stays usable
without them.

Kind mapping:

* text2img / img2img: the stock pipelines, seeded per result index
* region_guided: paint-with-words style attention bias; each region's
  description is appended to the prompt and its cross-attention logits are
  boosted inside the region mask, scaled by ``attention_weight``
* blend: inpainting at strength 1.0 inside the thresholded mask, then the
  decoded result is feathered back over the init with the soft mask, so
  the hard mask decides what regenerates and the soft edge hides the seam
"""
from __future__ import annotations

import numpy as np
from PIL import Image

from .config import AdapterConfig
from .wire import GenerationTask

# latent pipelines want multiples of 8
_LATENT_STEP = 8


def _padded(size: int) -> int:
    return (size + _LATENT_STEP - 1) // _LATENT_STEP * _LATENT_STEP


class RegionAttnProcessor:
    """Cross-attention processor adding a masked logit boost per region.

    ``spans`` maps a (start, end) token range to a float mask in [0, 1] at
    full image resolution; the mask is pooled down to whatever latent grid
    the attention layer runs at. The boost follows the common public port
    of paint-with-words: score += weight * score_max * mask.
    """

    def __init__(self, spans: list[tuple[int, int, np.ndarray]], weight: float) -> None:
        self._spans = spans
        self._weight = weight

    def __call__(self, attn, hidden_states, encoder_hidden_states=None,
                 attention_mask=None, **kwargs):
        import torch

        residual = hidden_states
        is_cross = encoder_hidden_states is not None
        if not is_cross:
            encoder_hidden_states = hidden_states

        query = attn.head_to_batch_dim(attn.to_q(hidden_states))
        key = attn.head_to_batch_dim(attn.to_k(encoder_hidden_states))
        value = attn.head_to_batch_dim(attn.to_v(encoder_hidden_states))

        scores = torch.baddbmm(
            torch.zeros(query.shape[0], query.shape[1], key.shape[1],
                        dtype=query.dtype, device=query.device),
            query, key.transpose(-1, -2), beta=0, alpha=attn.scale)
        if attention_mask is not None:
            scores = scores + attention_mask
        if is_cross and self._spans:
            q_len = scores.shape[1]
            side = int(round(q_len**0.5))
            # bias only the square self-consistent latent grids
            if side * side == q_len:
                peak = scores.detach().amax()
                for start, end, mask in self._spans:
                    pooled = np.asarray(Image.fromarray(
                        (mask * 255).astype(np.uint8)).resize((side, side),
                                                              Image.Resampling.BILINEAR),
                        dtype=np.float32) / 255.0
                    flat = torch.from_numpy(pooled.reshape(-1)).to(
                        scores.device, dtype=scores.dtype)
                    scores[:, :, start:end] += (
                        self._weight * peak * flat[None, :, None])
        probs = scores.softmax(dim=-1)
        hidden_states = torch.bmm(probs, value)
        hidden_states = attn.batch_to_head_dim(hidden_states)
        hidden_states = attn.to_out[0](hidden_states)
        hidden_states = attn.to_out[1](hidden_states)
        if attn.residual_connection:
            hidden_states = hidden_states + residual
        return hidden_states


class DiffusersPipeline:
    """Stable-diffusion family model behind the adapter's task interface."""

    name = "diffusers"
    kinds = ("text2img", "img2img", "region_guided", "blend")

    def __init__(self, config: AdapterConfig) -> None:
        import torch
        from diffusers import (
            AutoPipelineForImage2Image,
            AutoPipelineForInpainting,
            AutoPipelineForText2Image,
        )

        self._torch = torch
        self._config = config
        dtype = torch.float32 if config.device == "cpu" else torch.float16
        self._txt = AutoPipelineForText2Image.from_pretrained(
            config.model, torch_dtype=dtype).to(config.device)
        self._img = AutoPipelineForImage2Image.from_pipe(self._txt)
        self._inpaint = AutoPipelineForInpainting.from_pipe(self._txt)
        self.name = config.model

    def _generator(self, seed: int, index: int):
        g = self._torch.Generator(device=self._config.device)
        g.manual_seed((seed * 1_000_003 + index) % (2**63))
        return g

    def _common(self, task: GenerationTask) -> dict:
        return {
            "num_inference_steps": self._config.steps,
            "guidance_scale": self._config.guidance,
            "output_type": "pil",
        }

    def _region_prompt(self, task: GenerationTask) -> tuple[str, list]:
        """Composite prompt plus (token span, mask) boosts for each region."""
        tokenizer = self._txt.tokenizer
        parts = [task.prompt] + [r.text for r in task.regions]
        prompt = ". ".join(p for p in parts if p.strip())
        ids = tokenizer(prompt).input_ids
        spans = []
        for region in task.regions:
            sub = tokenizer(region.text, add_special_tokens=False).input_ids
            for start in range(len(ids) - len(sub) + 1):
                if ids[start:start + len(sub)] == sub:
                    spans.append((start, start + len(sub),
                                  region.mask.astype(np.float32)))
                    break
        return prompt, spans

    def run(self, task: GenerationTask) -> list[np.ndarray]:
        pw, ph = _padded(task.width), _padded(task.height)
        results: list[np.ndarray] = []
        for index in range(task.count):
            gen = self._generator(task.seed, index)
            if task.kind in ("text2img", "region_guided"):
                prompt = task.prompt
                processor = None
                if task.kind == "region_guided":
                    prompt, spans = self._region_prompt(task)
                    processor = RegionAttnProcessor(
                        spans, self._config.attention_weight)
                if processor is not None:
                    self._txt.unet.set_attn_processor(processor)
                try:
                    out = self._txt(prompt=prompt, width=pw, height=ph,
                                    generator=gen, **self._common(task)).images[0]
                finally:
                    if processor is not None:
                        self._txt.unet.set_default_attn_processor()
            elif task.kind == "img2img":
                init = Image.fromarray(task.init_image).resize((pw, ph))
                out = self._img(prompt=task.prompt, image=init,
                                strength=task.strength, generator=gen,
                                **self._common(task)).images[0]
            else:  # blend
                init = Image.fromarray(task.init_image).resize((pw, ph))
                soft = np.asarray(Image.fromarray(task.mask_image).resize((pw, ph)),
                                  dtype=np.float64) / 255.0
                hard = Image.fromarray(
                    ((soft > self._config.mask_threshold) * 255).astype(np.uint8))
                out = self._inpaint(prompt=task.prompt, image=init,
                                    mask_image=hard, strength=1.0, generator=gen,
                                    **self._common(task)).images[0]
                raw = np.asarray(out, dtype=np.float64)
                base = np.asarray(init, dtype=np.float64)
                out = Image.fromarray(np.rint(
                    base * (1.0 - soft[:, :, None]) + raw * soft[:, :, None]
                ).astype(np.uint8))
            arr = np.asarray(
                out.resize((task.width, task.height), Image.Resampling.LANCZOS)
                if out.size != (task.width, task.height) else out, dtype=np.uint8)
            results.append(arr)
        return results
