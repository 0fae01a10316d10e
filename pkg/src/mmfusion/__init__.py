"""Multimodal fake-news fusion network on pre-extracted features.

Text and image feature vectors are fused with scaled dot-product
attention and classified with a small feed-forward head. Everything runs
on a self-contained numpy autodiff engine; the package reads and writes
its own binary feature and checkpoint formats and ships a CLI for
training, evaluation, gradient checking, synthetic data generation, and
attention-map export.
"""

__version__ = "0.1.0"
