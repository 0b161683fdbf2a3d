"""Small text normalization helpers used across modules."""

import re
import unicodedata

_WS = re.compile(r"\s+")


def normalize_ws(text: str) -> str:
    """Trim and collapse internal whitespace to single spaces."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()


def fold(text: str) -> str:
    """Case-folded, whitespace-normalized form used for matching."""
    return normalize_ws(text).casefold()


def tokenize(text: str) -> list[str]:
    return fold(text).split()


def slugify(text: str) -> str:
    """Filesystem-friendly name for a root term (keeps umlauts)."""
    slug = re.sub(r"[^\w]+", "_", fold(text)).strip("_")
    return slug or "_"
