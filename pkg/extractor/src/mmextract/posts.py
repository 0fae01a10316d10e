"""Raw post loading: JSON-lines and the MediaEval tweet layout.

A post is text plus attached media ids and a veracity label. Posts that
reference a video are flagged rather than silently dropped here, so the
pipeline can count them; label strings normalize to real or fake, with
humor-labelled training posts counted as fake.
"""

import json
import os
from dataclasses import dataclass, field

__all__ = ["RawPost", "PostFormatError", "LABEL_CODES", "load_posts"]

LABEL_CODES = {"fake": 1, "humor": 1, "real": 0}

_IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".gif")


class PostFormatError(ValueError):
    """An input file does not match either supported post layout."""


@dataclass
class RawPost:
    id: str
    text: str
    image_paths: list = field(default_factory=list)
    label: str = "real"
    has_video: bool = False


def _code_for(label, where) -> str:
    norm = str(label).strip().lower()
    if norm not in LABEL_CODES:
        raise PostFormatError(
            f"{where}: unknown label {label!r}, expected one of {sorted(LABEL_CODES)}"
        )
    return norm


def _resolve_images(images_dir, media_ids):
    """Map media ids to existing files, trying common image extensions.

    Ids that resolve to nothing are dropped without error: on this
    corpus an unresolvable id is an image deleted since collection, and
    the post itself is still countable downstream.
    """
    paths = []
    for mid in media_ids:
        base = mid if os.path.isabs(mid) else os.path.join(images_dir, mid)
        if os.path.exists(base):
            paths.append(base)
            continue
        for ext in _IMAGE_EXTENSIONS:
            if os.path.exists(base + ext):
                paths.append(base + ext)
                break
    return paths


def _load_jsonl(path, images_dir):
    posts = []
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise PostFormatError(f"{path}:{lineno}: not valid JSON: {e}") from e
            missing = [k for k in ("id", "text", "label") if k not in obj]
            if missing:
                raise PostFormatError(f"{path}:{lineno}: missing fields {missing}")
            posts.append(
                RawPost(
                    id=str(obj["id"]),
                    text=str(obj["text"]),
                    image_paths=_resolve_images(images_dir, obj.get("images", [])),
                    label=_code_for(obj["label"], f"{path}:{lineno}"),
                    has_video=bool(obj.get("has_video", False)),
                )
            )
    return posts


def _load_tsv(path, images_dir):
    """Tab-separated tweets with a header naming at least post_id,
    post_text, image_id(s) and label; other columns are ignored. A media
    id containing "video" marks the post as carrying a video."""
    posts = []
    with open(path) as f:
        header = f.readline().rstrip("\n").split("\t")
        cols = {name.strip().lower(): i for i, name in enumerate(header)}
        media_key = "image_id(s)" if "image_id(s)" in cols else "image_id"
        needed = ["post_id", "post_text", media_key, "label"]
        missing = [k for k in needed if k not in cols]
        if missing:
            raise PostFormatError(f"{path}: header is missing columns {missing}")
        for lineno, raw in enumerate(f, 2):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < len(header):
                raise PostFormatError(
                    f"{path}:{lineno}: {len(fields)} fields, header names {len(header)}"
                )
            media_ids = [m.strip() for m in fields[cols[media_key]].split(",") if m.strip()]
            has_video = any("video" in m.lower() for m in media_ids)
            image_ids = [m for m in media_ids if "video" not in m.lower()]
            posts.append(
                RawPost(
                    id=fields[cols["post_id"]].strip(),
                    text=fields[cols["post_text"]],
                    image_paths=_resolve_images(images_dir, image_ids),
                    label=_code_for(fields[cols["label"]], f"{path}:{lineno}"),
                    has_video=has_video,
                )
            )
    return posts


def load_posts(path, images_dir="."):
    """Read posts from a .jsonl/.json file or a MediaEval-style TSV."""
    if str(path).endswith((".jsonl", ".json")):
        return _load_jsonl(path, images_dir)
    return _load_tsv(path, images_dir)
