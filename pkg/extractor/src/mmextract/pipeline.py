"""End-to-end extraction: posts in, one MMFF feature file out.

Per post: video posts are dropped and counted, one attached image is
chosen uniformly (seeded per post, so reordering or filtering the input
never shifts another post's draw), the text is normalized and encoded,
the image is encoded, and one record is written. Undecodable images skip
the post with its id logged; output I/O errors abort the run, annotated
with the post id being written.
"""

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .encoders import ImageDecodeError
from .features import extract_image_features, extract_text_features
from .posts import LABEL_CODES, PostFormatError
from .preprocessing import preprocess_text
from .writer import FeatureWriter

__all__ = ["ExtractionSummary", "record_id", "choose_image", "build_feature_file"]

logger = logging.getLogger("mmextract")


@dataclass
class ExtractionSummary:
    kept: int = 0
    dropped_video: int = 0
    dropped_no_image: int = 0
    dropped_undecodable: int = 0
    bytes_written: int = 0

    def to_text(self) -> str:
        return (
            f"kept {self.kept}\n"
            f"dropped {self.dropped_video} with video, "
            f"{self.dropped_no_image} without images, "
            f"{self.dropped_undecodable} with undecodable images\n"
            f"{self.bytes_written} bytes written\n"
        )


def record_id(post_id: str) -> int:
    """Stable u64 for a post: numeric ids pass through unchanged,
    anything else hashes deterministically."""
    if post_id.isdigit() and int(post_id) < 2**64:
        return int(post_id)
    digest = hashlib.blake2b(post_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def choose_image(post, seed: int) -> str:
    """Uniform pick among the post's images, seeded per post id.

    A post with one image gets that image whatever the seed; the same
    (seed, post) pair always picks the same path.
    """
    rng = np.random.default_rng((seed, record_id(post.id)))
    return post.image_paths[int(rng.integers(len(post.image_paths)))]


def build_feature_file(posts, seed, out_path, text_encoder, image_encoder) -> ExtractionSummary:
    """Extract features for every usable post and write them in order.

    The record count in the output equals the kept count in the summary;
    the same posts, seed, and encoders produce byte-identical files.
    """
    summary = ExtractionSummary()
    with FeatureWriter(out_path) as w:
        for post in posts:
            if post.has_video:
                summary.dropped_video += 1
                continue
            if not post.image_paths:
                summary.dropped_no_image += 1
                continue
            label = LABEL_CODES.get(str(post.label).strip().lower())
            if label is None:
                raise PostFormatError(f"post {post.id}: unknown label {post.label!r}")
            image_path = choose_image(post, seed)
            try:
                image_global, regions = extract_image_features(image_path, image_encoder)
            except ImageDecodeError as e:
                logger.warning("post %s: skipped, image undecodable (%s)", post.id, e)
                summary.dropped_undecodable += 1
                continue
            tokens = extract_text_features(preprocess_text(post.text), text_encoder)
            try:
                w.add(record_id(post.id), label, tokens, image_global, regions)
            except OSError as e:
                raise OSError(f"while writing post {post.id}: {e}") from e
        summary.kept = w.n_written
        summary.bytes_written = w.bytes_written
    return summary
