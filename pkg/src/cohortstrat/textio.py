"""Token escaping for whitespace-delimited text formats, plus file hashing."""

import hashlib
import re

_ESCAPES = {"%": "%25", " ": "%20", "\t": "%09", "\n": "%0A", "\r": "%0D"}
_UNESCAPE = re.compile(r"%(25|20|09|0A|0D)")


def escape_token(token: str) -> str:
    # '%' first so that escapes are not double-encoded
    return "".join(_ESCAPES.get(ch, ch) for ch in token)


def unescape_token(text: str) -> str:
    return _UNESCAPE.sub(lambda m: chr(int(m.group(1), 16)), text)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def format_float(x: float) -> str:
    """Nine significant digits; integral values keep a trailing ``.0``."""
    s = f"{float(x):.9g}"
    if not any(c in s for c in ".eni"):
        s += ".0"
    return s
