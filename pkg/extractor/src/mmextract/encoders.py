"""Frozen encoders turning text and images into fixed-width features.

Two families behind the same two-method surface (see TextEncoder and
ImageEncoder): offline encoders that are pure deterministic functions of
the input bytes, for tests and plumbing work without downloads, and
pretrained encoders wrapping a tweet-domain BERT variant and VGG-19.
The pretrained pair imports torch lazily; missing packages or weights
raise EncoderUnavailableError rather than ImportError at module load.

All encoders are feature extractors only: nothing here has trainable
state, and the same input always produces the same output.
"""

import hashlib
from typing import Protocol

import numpy as np
from PIL import Image, UnidentifiedImageError

from .features import (
    GLOBAL_DIM,
    HIDDEN_DIM,
    IMAGE_SIZE,
    N_LAYERS,
    N_REGIONS,
    REGION_DIM,
    REGION_GRID,
    SEQ_LEN,
    TEXT_DIM,
)

__all__ = [
    "EncoderUnavailableError",
    "ImageDecodeError",
    "TextEncoder",
    "ImageEncoder",
    "OfflineTextEncoder",
    "OfflineImageEncoder",
    "BertweetTextEncoder",
    "Vgg19ImageEncoder",
    "make_encoders",
]


class EncoderUnavailableError(RuntimeError):
    """A pretrained encoder's packages or weights cannot be loaded."""


class ImageDecodeError(ValueError):
    """The file at the given path could not be read as an image."""


class TextEncoder(Protocol):
    def encode(self, text: str) -> np.ndarray:
        """Preprocessed text in, (SEQ_LEN, TEXT_DIM) float32 out."""


class ImageEncoder(Protocol):
    def encode(self, path):
        """Image path in, ((GLOBAL_DIM,), (N_REGIONS, REGION_DIM)) out."""


def _load_rgb(path) -> np.ndarray:
    """Decode and resize to IMAGE_SIZE x IMAGE_SIZE x 3, values in [0, 1].

    Both image encoders share this step; anything Pillow cannot open or
    parse (including a missing file, which on this corpus means a since-
    deleted image) surfaces as ImageDecodeError so callers can skip the
    post rather than abort the run.
    """
    try:
        with Image.open(path) as im:
            resized = im.convert("RGB").resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR)
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise ImageDecodeError(f"{path}: {e}") from e
    return np.asarray(resized, dtype=np.float32) / 255.0


class OfflineTextEncoder:
    """Deterministic stand-in for a pretrained text model.

    Each distinct token maps to a fixed pseudo-random row: the token's
    bytes are hashed to seed a generator, which draws one 768-wide
    vector per simulated layer, concatenated to 3072. Right-truncates
    past SEQ_LEN tokens and right-pads with the reserved pad token, so
    the empty string encodes to SEQ_LEN identical pad rows.
    """

    pad_token = "<pad>"

    def __init__(self):
        self._rows = {}

    def _row(self, token: str) -> np.ndarray:
        cached = self._rows.get(token)
        if cached is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            key = int.from_bytes(digest, "little")
            parts = [
                np.random.default_rng((key, layer)).standard_normal(HIDDEN_DIM)
                for layer in range(N_LAYERS)
            ]
            cached = self._rows[token] = np.concatenate(parts).astype(np.float32)
        return cached

    def encode(self, text: str) -> np.ndarray:
        tokens = text.split()[:SEQ_LEN]
        rows = [self._row(t) for t in tokens]
        rows.extend([self._row(self.pad_token)] * (SEQ_LEN - len(rows)))
        return np.stack(rows)


# fixed projection matrices for the offline image encoder, built once
_PROJECTIONS = {}


def _projection(name, shape, seed) -> np.ndarray:
    if name not in _PROJECTIONS:
        rng = np.random.default_rng(seed)
        _PROJECTIONS[name] = (
            rng.standard_normal(shape) / np.sqrt(shape[0])
        ).astype(np.float32)
    return _PROJECTIONS[name]


class OfflineImageEncoder:
    """Deterministic image features from fixed random projections.

    The image is decoded with Pillow and resized to 224x224 like the
    pretrained path. Region rows come from the 7x7 grid of 32x32-pixel
    cells, each flattened and passed through a fixed projection to 512;
    the global vector is a 16x16 thumbnail through another fixed
    projection to 4096. The projections are seeded constants, so the
    same image bytes always give the same features, and images that
    differ anywhere in content give different ones.
    """

    def encode(self, path):
        pixels = _load_rgb(path)
        cell = IMAGE_SIZE // REGION_GRID
        grid = pixels.reshape(REGION_GRID, cell, REGION_GRID, cell, 3)
        cells = grid.transpose(0, 2, 1, 3, 4).reshape(N_REGIONS, cell * cell * 3)
        regions = cells @ _projection("regions", (cell * cell * 3, REGION_DIM), 607)

        thumb = pixels.reshape(16, IMAGE_SIZE // 16, 16, IMAGE_SIZE // 16, 3)
        thumb = thumb.mean(axis=(1, 3)).reshape(-1)
        vec = thumb @ _projection("global", (thumb.size, GLOBAL_DIM), 613)
        return vec.astype(np.float32), regions.astype(np.float32)


class BertweetTextEncoder:
    """Per-token features from a frozen tweet-domain BERT variant.

    The last four hidden layers are concatenated per token position, with
    the model's own subword tokenizer padding and truncating to SEQ_LEN.
    Pass a different model name to compare general-domain variants; the
    model's hidden size times four must still equal TEXT_DIM, which rules
    out large variants (1024-wide layers do not fit the container).
    """

    def __init__(self, model_name: str = "vinai/bertweet-base"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as e:
            raise EncoderUnavailableError(
                f"text encoder needs torch and transformers installed: {e}"
            ) from e
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_name)
            self._model = AutoModel.from_pretrained(model_name, output_hidden_states=True)
        except Exception as e:
            raise EncoderUnavailableError(
                f"could not load pretrained weights for {model_name}: {e}"
            ) from e
        hidden = self._model.config.hidden_size
        if hidden * N_LAYERS != TEXT_DIM:
            raise ValueError(
                f"{model_name}: hidden size {hidden} concatenates to "
                f"{hidden * N_LAYERS}, the container stores rows of {TEXT_DIM}"
            )
        self._model.eval()
        self._torch = torch

    def encode(self, text: str) -> np.ndarray:
        torch = self._torch
        enc = self._tokenizer(
            text,
            padding="max_length",
            truncation=True,
            max_length=SEQ_LEN,
            return_tensors="pt",
        )
        with torch.no_grad():
            out = self._model(**enc)
        stacked = torch.cat(out.hidden_states[-N_LAYERS:], dim=-1)[0]
        return stacked.numpy().astype(np.float32)


class Vgg19ImageEncoder:
    """VGG-19 features: penultimate 4096 activations plus the 7x7 map.

    The global vector is the output of the classifier stack up to but not
    including the final class-score layer; the region rows are the last
    convolutional feature map (512 channels over a 7x7 grid at 224x224
    input), flattened row-major. Inputs are normalized with the ImageNet
    channel statistics the backbone was trained with.
    """

    def __init__(self):
        try:
            import torch
            from torchvision import models
        except ImportError as e:
            raise EncoderUnavailableError(
                f"image encoder needs torch and torchvision installed: {e}"
            ) from e
        try:
            net = models.vgg19(weights=models.VGG19_Weights.IMAGENET1K_V1)
        except Exception as e:
            raise EncoderUnavailableError(
                f"could not load pretrained VGG-19 weights: {e}"
            ) from e
        net.eval()
        self._net = net
        self._torch = torch
        self._mean = np.array([0.485, 0.456, 0.406], dtype=np.float32)
        self._std = np.array([0.229, 0.224, 0.225], dtype=np.float32)

    def encode(self, path):
        torch = self._torch
        pixels = (_load_rgb(path) - self._mean) / self._std
        x = torch.from_numpy(pixels.transpose(2, 0, 1)[None])
        with torch.no_grad():
            fm = self._net.features(x)
            flat = torch.flatten(self._net.avgpool(fm), 1)
            vec = self._net.classifier[:-1](flat)
        regions = fm[0].permute(1, 2, 0).reshape(N_REGIONS, REGION_DIM)
        return (
            vec[0].numpy().astype(np.float32),
            regions.numpy().astype(np.float32),
        )


def make_encoders(kind: str, text_model: str | None = None):
    """Build the (text, image) encoder pair the CLI asked for."""
    if kind == "offline":
        return OfflineTextEncoder(), OfflineImageEncoder()
    if kind == "pretrained":
        return (
            BertweetTextEncoder(text_model or "vinai/bertweet-base"),
            Vgg19ImageEncoder(),
        )
    raise ValueError(f"unknown encoder kind {kind!r}, expected offline or pretrained")
