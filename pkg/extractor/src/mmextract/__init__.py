"""Feature extraction for multimodal post classification.

Takes raw posts (tweet text plus attached images), normalizes the text,
runs frozen text and image encoders, and writes fixed-layout binary
feature files that the downstream fusion model trains on.
"""

from .encoders import (
    BertweetTextEncoder,
    EncoderUnavailableError,
    ImageDecodeError,
    OfflineImageEncoder,
    OfflineTextEncoder,
    Vgg19ImageEncoder,
    make_encoders,
)
from .features import (
    GLOBAL_DIM,
    N_REGIONS,
    REGION_DIM,
    SEQ_LEN,
    TEXT_DIM,
    extract_image_features,
    extract_text_features,
)
from .pipeline import ExtractionSummary, build_feature_file, choose_image, record_id
from .posts import LABEL_CODES, PostFormatError, RawPost, load_posts
from .preprocessing import EMOTICON_WORDS, preprocess_text, tokenize
from .writer import HEADER_SIZE, RECORD_SIZE, FeatureWriter

__all__ = [
    "BertweetTextEncoder",
    "EncoderUnavailableError",
    "ImageDecodeError",
    "OfflineImageEncoder",
    "OfflineTextEncoder",
    "Vgg19ImageEncoder",
    "make_encoders",
    "GLOBAL_DIM",
    "N_REGIONS",
    "REGION_DIM",
    "SEQ_LEN",
    "TEXT_DIM",
    "extract_image_features",
    "extract_text_features",
    "ExtractionSummary",
    "build_feature_file",
    "choose_image",
    "record_id",
    "LABEL_CODES",
    "PostFormatError",
    "RawPost",
    "load_posts",
    "EMOTICON_WORDS",
    "preprocess_text",
    "tokenize",
    "HEADER_SIZE",
    "RECORD_SIZE",
    "FeatureWriter",
]
