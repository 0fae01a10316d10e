"""Input layout parsing: JSON-lines and tab-separated tweets."""

import json

import pytest

from mmextract.posts import PostFormatError, RawPost, load_posts


def _touch(path):
    path.write_bytes(b"stub")
    return path


def test_jsonl_round(tmp_path):
    img = _touch(tmp_path / "pic1.jpg")
    posts_file = tmp_path / "posts.jsonl"
    lines = [
        {"id": 1, "text": "hello", "images": ["pic1.jpg"], "label": "fake"},
        {"id": 2, "text": "clip", "images": [], "label": "real", "has_video": True},
    ]
    posts_file.write_text("\n".join(json.dumps(o) for o in lines) + "\n")
    posts = load_posts(posts_file, tmp_path)
    assert [p.id for p in posts] == ["1", "2"]
    assert posts[0].image_paths == [str(img)]
    assert posts[0].label == "fake"
    assert posts[1].has_video


def test_jsonl_missing_field_raises(tmp_path):
    posts_file = tmp_path / "posts.jsonl"
    posts_file.write_text('{"id": 1, "text": "no label"}\n')
    with pytest.raises(PostFormatError, match="label"):
        load_posts(posts_file, tmp_path)


def test_jsonl_bad_json_raises_with_line_number(tmp_path):
    posts_file = tmp_path / "posts.jsonl"
    posts_file.write_text('{"id": 1, "text": "x", "label": "real"}\n{not json\n')
    with pytest.raises(PostFormatError, match=":2"):
        load_posts(posts_file, tmp_path)


def test_unknown_label_raises(tmp_path):
    posts_file = tmp_path / "posts.jsonl"
    posts_file.write_text('{"id": 1, "text": "x", "label": "maybe"}\n')
    with pytest.raises(PostFormatError, match="maybe"):
        load_posts(posts_file, tmp_path)


def test_label_case_and_spacing_normalize(tmp_path):
    posts_file = tmp_path / "posts.jsonl"
    posts_file.write_text('{"id": 1, "text": "x", "label": " FAKE "}\n')
    assert load_posts(posts_file, tmp_path)[0].label == "fake"


_TSV_HEADER = "post_id\tpost_text\tuser_id\timage_id(s)\ttimestamp\tlabel\n"


def test_tsv_layout(tmp_path):
    img = _touch(tmp_path / "sandy_fake_01.jpg")
    posts_file = tmp_path / "posts.txt"
    posts_file.write_text(
        _TSV_HEADER
        + "263046056240115712\tsoooo real :)\tu9\tsandy_fake_01\t1351000000\tfake\n"
        + "263046056240115713\tcalm\tu10\tsandy_video_01\t1351000001\treal\n"
    )
    posts = load_posts(posts_file, tmp_path)
    assert posts[0].id == "263046056240115712"
    assert posts[0].image_paths == [str(img)]
    assert not posts[0].has_video
    assert posts[1].has_video
    assert posts[1].image_paths == []


def test_tsv_extension_guessing_and_multiple_ids(tmp_path):
    a = _touch(tmp_path / "a.png")
    b = _touch(tmp_path / "b.jpeg")
    posts_file = tmp_path / "posts.txt"
    posts_file.write_text(_TSV_HEADER + "1\ttwo pics\tu\ta,b\t0\thumor\n")
    (post,) = load_posts(posts_file, tmp_path)
    assert post.image_paths == [str(a), str(b)]
    assert post.label == "humor"


def test_tsv_unresolvable_image_id_is_dropped_silently(tmp_path):
    posts_file = tmp_path / "posts.txt"
    posts_file.write_text(_TSV_HEADER + "1\tgone\tu\tdeleted_pic\t0\tfake\n")
    (post,) = load_posts(posts_file, tmp_path)
    assert post.image_paths == []
    assert not post.has_video


def test_tsv_missing_column_raises(tmp_path):
    posts_file = tmp_path / "posts.txt"
    posts_file.write_text("post_id\tpost_text\tlabel\n1\tx\tfake\n")
    with pytest.raises(PostFormatError, match="image_id"):
        load_posts(posts_file, tmp_path)


def test_tsv_short_row_raises_with_line_number(tmp_path):
    posts_file = tmp_path / "posts.txt"
    posts_file.write_text(_TSV_HEADER + "1\tonly two\n")
    with pytest.raises(PostFormatError, match=":2"):
        load_posts(posts_file, tmp_path)


def test_rawpost_defaults():
    post = RawPost(id="9", text="bare")
    assert post.image_paths == []
    assert not post.has_video
