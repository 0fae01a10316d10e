"""Tweet text normalization applied before feature extraction.

Three passes, in one tokenizing sweep: social-media tokenization (URLs,
@mentions, and #hashtags survive as single tokens, punctuation is split
from words), an explicit emoticon table mapped to sentiment words, and
elongation shortening (character runs longer than two collapse to two,
so "Coooool" becomes "Cool"). The output joins tokens with single
spaces; running it twice gives the same string as running it once.
"""

import re

__all__ = ["EMOTICON_WORDS", "preprocess_text", "tokenize"]

# The full extent of emoticon handling. Anything not listed here passes
# through as ordinary punctuation; the two target words are deliberate.
EMOTICON_WORDS = {
    ":)": "happy",
    ":-)": "happy",
    ":]": "happy",
    "=)": "happy",
    ":D": "happy",
    ":-D": "happy",
    ";)": "happy",
    ":(": "sad",
    ":-(": "sad",
    ":[": "sad",
    "=(": "sad",
    ":'(": "sad",
    ";(": "sad",
}

_URL = r"(?:https?://|www\.)\S+"
_MENTION = r"@\w+"
_HASHTAG = r"#\w+"
_EMOTICON = "|".join(
    re.escape(e) for e in sorted(EMOTICON_WORDS, key=len, reverse=True)
)
_WORD = r"\w+(?:'\w+)?"
# single characters here, merged into runs afterwards: a greedy
# punctuation run would swallow the first character of a following
# emoticon before the emoticon branch ever saw it
_PUNCT = r"[^\w\s]"

_TOKEN_RE = re.compile(
    f"(?P<url>{_URL})|(?P<mention>{_MENTION})|(?P<hashtag>{_HASHTAG})"
    f"|(?P<emoticon>{_EMOTICON})|(?P<word>{_WORD})|(?P<punct>{_PUNCT})"
)

_ELONGATION_RE = re.compile(r"(.)\1{2,}")


def _shorten(token: str) -> str:
    """Collapse any character run of length three or more down to two."""
    return _ELONGATION_RE.sub(r"\1\1", token)


def tokenize(text: str):
    """Split raw text into normalized tokens.

    URLs, mentions, and hashtags are kept verbatim (shortening inside an
    identifier would change what it refers to); emoticons from the table
    become their sentiment word; words and punctuation runs get
    elongation shortening. Case is preserved throughout.
    """
    raw = [(m.lastgroup, m.group(), m.start(), m.end())
           for m in _TOKEN_RE.finditer(text)]
    tokens = []
    i = 0
    while i < len(raw):
        kind, tok, _, end = raw[i]
        if kind == "emoticon":
            tokens.append(EMOTICON_WORDS[tok])
        elif kind == "word":
            tokens.append(_shorten(tok))
        elif kind == "punct":
            run = tok
            while (i + 1 < len(raw) and raw[i + 1][0] == "punct"
                   and raw[i + 1][1] == tok and raw[i + 1][2] == end):
                i += 1
                end = raw[i][3]
                run += tok
            tokens.append(_shorten(run))
        else:
            tokens.append(tok)
        i += 1
    return tokens


def preprocess_text(text: str) -> str:
    """Normalize a post's text; empty input comes back empty."""
    return " ".join(tokenize(text))
