"""Tokenizer and token cursor shared by the .dfd and .rules parsers."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError, SourceSpan

IDENT = "IDENT"
NUMBER = "NUMBER"
STRING = "STRING"
ARROW = "ARROW"
PUNCT = "PUNCT"
NEWLINE = "NEWLINE"
EOF = "EOF"
OTHER = "OTHER"

PUNCTUATION = frozenset(".{}=(),:+-*/")
_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan

    def is_word(self, *words: str) -> bool:
        """Case-insensitive keyword test."""
        return self.kind == IDENT and self.text.casefold() in {w.casefold() for w in words}

    def is_punct(self, char: str) -> bool:
        return self.kind == PUNCT and self.text == char

    def describe(self) -> str:
        if self.kind == EOF:
            return "end of input"
        if self.kind == NEWLINE:
            return "end of line"
        return repr(self.text)


def decode(source: str | bytes) -> str:
    if isinstance(source, str):
        return source
    try:
        return source.decode("utf-8")
    except UnicodeDecodeError as exc:
        prefix = source[: exc.start].decode("utf-8", errors="replace")
        line = prefix.count("\n") + 1
        column = len(prefix) - (prefix.rfind("\n") + 1) + 1
        raise ParseError("document is not valid UTF-8", SourceSpan(line, column, 1), code="E_ENCODING") from None


def tokenize(text: str, *, strings: bool = True) -> list[Token]:
    """Split `text` into tokens; `#` starts a comment running to end of line."""
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(start_col: int, length: int) -> SourceSpan:
        return SourceSpan(line, start_col, length)

    while i < n:
        ch = text[i]
        if ch == "\n":
            tokens.append(Token(NEWLINE, "\n", span(col, 1)))
            i, line, col = i + 1, line + 1, 1
        elif ch == "#":
            while i < n and text[i] != "\n":
                i, col = i + 1, col + 1
        elif ch.isspace():
            i, col = i + 1, col + 1
        elif ch.isascii() and ch.isalpha():
            j = i + 1
            while j < n and text[j].isascii() and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token(IDENT, text[i:j], span(col, j - i)))
            col += j - i
            i = j
        elif ch.isascii() and ch.isdigit():
            j = i + 1
            while j < n and text[j].isascii() and text[j].isdigit():
                j += 1
            if j + 1 < n and text[j] == "." and text[j + 1].isascii() and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isascii() and text[j].isdigit():
                    j += 1
            tokens.append(Token(NUMBER, text[i:j], span(col, j - i)))
            col += j - i
            i = j
        elif ch == '"' and strings:
            start_col = col
            j = i + 1
            chars: list[str] = []
            while True:
                if j >= n or text[j] == "\n":
                    raise ParseError("unterminated string", span(start_col, j - i), ('"',))
                c = text[j]
                if c == '"':
                    j += 1
                    break
                if c == "\\":
                    if j + 1 >= n or text[j + 1] not in _ESCAPES:
                        raise ParseError("invalid escape sequence", SourceSpan(line, start_col + (j - i), 2))
                    chars.append(_ESCAPES[text[j + 1]])
                    j += 2
                    continue
                chars.append(c)
                j += 1
            tokens.append(Token(STRING, "".join(chars), span(start_col, j - i)))
            col += j - i
            i = j
        elif text.startswith("->", i):
            tokens.append(Token(ARROW, "->", span(col, 2)))
            i, col = i + 2, col + 2
        elif ch in PUNCTUATION:
            tokens.append(Token(PUNCT, ch, span(col, 1)))
            i, col = i + 1, col + 1
        else:
            tokens.append(Token(OTHER, ch, span(col, 1)))
            i, col = i + 1, col + 1
    tokens.append(Token(EOF, "", SourceSpan(line, col, 0)))
    return tokens


def quote(text: str) -> str:
    """Inverse of STRING tokenization."""
    out = text.replace("\\", "\\\\").replace('"', '\\"')
    return '"' + out.replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t") + '"'


class Cursor:
    """Recursive-descent helper over a token list."""

    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def at_end(self) -> bool:
        return self.current.kind == EOF

    def skip_newlines(self) -> None:
        while self.current.kind == NEWLINE:
            self.advance()

    def error(self, message: str, expected: tuple[str, ...] = (), code: str | None = None, token: Token | None = None) -> ParseError:
        tok = token or self.current
        return ParseError(f"{message}, found {tok.describe()}", tok.span, expected, code)

    def expect_ident(self, what: str) -> Token:
        if self.current.kind != IDENT:
            raise self.error(f"expected {what}", (what,))
        return self.advance()

    def expect_punct(self, char: str) -> Token:
        if not self.current.is_punct(char):
            raise self.error(f"expected {char!r}", (char,))
        return self.advance()

    def accept_punct(self, char: str) -> Token | None:
        if self.current.is_punct(char):
            return self.advance()
        return None

    def expect_line_end(self) -> None:
        if self.current.kind not in (NEWLINE, EOF):
            raise self.error("expected end of line", ("end of line",))
        self.advance()
