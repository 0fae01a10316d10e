"""Command-line interface: turn a post corpus into a feature file.

Errors print a single line to stderr of the form ``error:<category>:
message`` and exit nonzero; categories are format, encoder, config,
and io. Skipped posts (undecodable images) are logged as warnings as
the run goes, then counted in the final summary.
"""

import argparse
import logging
import sys

from .encoders import EncoderUnavailableError, make_encoders
from .pipeline import build_feature_file
from .posts import PostFormatError, load_posts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmextract",
        description="Extract text and image features from posts into a binary feature file.",
    )
    parser.add_argument("--input", required=True,
                        help="posts file (.jsonl, or tab-separated tweets with a header)")
    parser.add_argument("--images-dir", default=".", dest="images_dir",
                        help="directory the posts' media ids resolve against")
    parser.add_argument("--out", required=True, help="output feature file")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for choosing one image per multi-image post")
    parser.add_argument("--encoder", choices=("pretrained", "offline"), default="pretrained",
                        help="pretrained backbones, or deterministic offline encoders")
    parser.add_argument("--text-model", dest="text_model",
                        help="pretrained text model name to compare variants")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        posts = load_posts(args.input, args.images_dir)
        text_encoder, image_encoder = make_encoders(args.encoder, args.text_model)
        summary = build_feature_file(posts, args.seed, args.out,
                                     text_encoder, image_encoder)
        sys.stdout.write(summary.to_text())
        print(f"wrote {summary.kept} records to {args.out}")
        return 0
    except PostFormatError as e:
        print(f"error:format: {e}", file=sys.stderr)
    except EncoderUnavailableError as e:
        print(f"error:encoder: {e}", file=sys.stderr)
    except ValueError as e:
        print(f"error:config: {e}", file=sys.stderr)
    except OSError as e:
        print(f"error:io: {e}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
