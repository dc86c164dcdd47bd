"""Lightweight Java source helpers.

No real parsing happens here: comments and literals are masked out, then
braces and a handful of regular expressions do the rest. That is enough to
find member declarations, method spans and call sites in ordinary code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

JAVA_KEYWORDS = frozenset("""
abstract assert boolean break byte case catch char class const continue default do
double else enum extends final finally float for goto if implements import instanceof
int interface long native new package private protected public return short static
strictfp super switch synchronized this throw throws transient try void volatile while
var record yield sealed permits
""".split())


def mask(text: str) -> str:
    """Blank out comments and string/char literal contents, preserving length and newlines."""
    out = list(text)
    i, n = 0, len(text)

    def blank(a: int, b: int) -> None:
        for j in range(a, b):
            if out[j] != "\n":
                out[j] = " "

    while i < n:
        c = text[i]
        if text.startswith("//", i):
            j = text.find("\n", i)
            j = n if j < 0 else j
            blank(i, j)
            i = j
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            blank(i, j)
            i = j
        elif text.startswith('"""', i):
            j = text.find('"""', i + 3)
            j = n if j < 0 else j + 3
            blank(i + 3, max(i + 3, j - 3))
            i = j
        elif c in "\"'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            blank(i + 1, min(j, n))
            i = j + 1
        else:
            i += 1
    return "".join(out)


def is_balanced(text: str) -> bool:
    depth = {"{": 0, "(": 0}
    closing = {"}": "{", ")": "("}
    for c in mask(text):
        if c in depth:
            depth[c] += 1
        elif c in closing:
            depth[closing[c]] -= 1
            if depth[closing[c]] < 0:
                return False
    return all(v == 0 for v in depth.values())


def match_brace(masked: str, open_pos: int) -> int:
    """Index of the brace closing the one at ``open_pos``, or -1."""
    depth = 0
    for i in range(open_pos, len(masked)):
        if masked[i] == "{":
            depth += 1
        elif masked[i] == "}":
            depth -= 1
            if depth == 0:
                return i
    return -1


def line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def line_start(text: str, offset: int) -> int:
    return text.rfind("\n", 0, offset) + 1


_WORD = re.compile(r"[A-Za-z_$][\w$]*")


@dataclass(frozen=True)
class Member:
    """A member declared directly inside the top-level type."""

    name: str
    kind: str  # method | constructor | field
    header: str  # declaration text without body / initializer
    source: str  # full member text from the first signature line to its end
    doc: str
    annotations: tuple[str, ...]
    params: tuple[str, ...]
    start_line: int
    end_line: int
    is_static: bool

    @property
    def param_types(self) -> tuple[str, ...]:
        return tuple(param_type(p) for p in self.params)


def split_params(params: str) -> list[str]:
    out, depth, cur = [], 0, []
    for c in params:
        if c in "<([":
            depth += 1
        elif c in ">)]":
            depth -= 1
        if c == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(c)
    last = "".join(cur).strip()
    if last:
        out.append(last)
    return out


def param_type(param: str) -> str:
    param = re.sub(r"@\w+(\([^)]*\))?\s*", "", param)
    param = re.sub(r"\bfinal\s+", "", param).strip()
    parts = param.rsplit(None, 1)
    return parts[0].strip() if len(parts) == 2 else param


def _clean_doc(raw: str) -> str:
    body = raw.strip()
    body = body.removeprefix("/**").removesuffix("*/")
    lines = [re.sub(r"^\s*\*\s?", "", ln).strip() for ln in body.splitlines()]
    return " ".join(ln for ln in lines if ln).strip()


def package_of(text: str) -> str:
    m = re.search(r"^\s*package\s+([\w.]+)\s*;", mask(text), re.M)
    return m.group(1) if m else ""


def top_level_type(text: str) -> tuple[str, int]:
    """(type name, offset of its opening brace) for the first top-level type."""
    masked = mask(text)
    m = re.search(r"\b(class|interface|enum|record)\s+([A-Za-z_$][\w$]*)", masked)
    if not m:
        return "", -1
    brace = masked.find("{", m.end())
    return m.group(2), brace


def members(text: str) -> list[Member]:
    masked = mask(text)
    cls, brace = top_level_type(text)
    if brace < 0:
        return []
    out: list[Member] = []
    i, n = brace + 1, len(masked)
    chunk_start = i
    while i < n:
        c = masked[i]
        if c == "}":
            break  # end of type body
        if c == "{":
            head = masked[chunk_start:i]
            end = match_brace(masked, i)
            if end < 0:
                break
            if "=" in head and "(" not in head.split("=", 1)[0]:
                # field initialiser containing braces; run on to the semicolon
                semi = masked.find(";", end)
                end = semi if semi >= 0 else end
            out_member = _classify(text, masked, chunk_start, i, end + 1, cls)
            if out_member:
                out.append(out_member)
            i = end + 1
            chunk_start = i
            continue
        if c == ";":
            out_member = _classify(text, masked, chunk_start, i, i + 1, cls)
            if out_member:
                out.append(out_member)
            chunk_start = i + 1
        i += 1
    return out


def _classify(text, masked, start, head_end, end, cls) -> Optional[Member]:
    head_masked = masked[start:head_end]
    if not head_masked.strip():
        return None
    if re.search(r"\b(class|interface|enum|record)\b", head_masked):
        return None
    # doc comment: the last /** ... */ inside the chunk prefix
    raw_chunk = text[start:head_end]
    first_code = len(head_masked) - len(head_masked.lstrip())
    doc = ""
    for m in re.finditer(r"/\*\*.*?\*/", raw_chunk, re.S):
        doc = _clean_doc(m.group(0))
    # annotations precede the signature
    ann_re = re.compile(r"\s*(@[\w.]+(\s*\([^)]*\))?)")
    annotations = []
    pos = first_code
    while True:
        m = ann_re.match(head_masked, pos)
        if not m or not m.group(1).strip():
            break
        annotations.append(text[start + m.start(1):start + m.end(1)])
        pos = m.end()
    sig_off = pos + (len(head_masked[pos:]) - len(head_masked[pos:].lstrip()))
    sig_abs = start + sig_off
    head = re.sub(r"\s+", " ", text[sig_abs:head_end]).strip()
    head_m = re.sub(r"\s+", " ", masked[sig_abs:head_end]).strip()
    if not head_m or head_m == "static":
        return None
    is_static = bool(re.search(r"\bstatic\b", head_m.split("(")[0]))
    before_eq = head_m.split("=", 1)[0]
    call = re.search(r"([A-Za-z_$][\w$]*)\s*\(", before_eq)
    source_start = line_start(text, sig_abs)
    src = text[source_start:end]
    if call:
        name = call.group(1)
        close = _match_paren(head_m, call.end() - 1)
        params = tuple(split_params(head[call.end():close])) if close > 0 else ()
        kind = "constructor" if name == cls else "method"
        return Member(name, kind, head, src, doc, tuple(annotations), params,
                      line_of(text, sig_abs), line_of(text, end - 1), is_static)
    words = _WORD.findall(before_eq.rstrip(";").strip())
    words = [w for w in words if w not in JAVA_KEYWORDS or w in ("var",)]
    if not words:
        return None
    name = words[-1]
    decl = re.sub(r"\s+", " ", text[sig_abs:end]).strip()
    return Member(name, "field", decl, src, doc, tuple(annotations), (),
                  line_of(text, sig_abs), line_of(text, end - 1), is_static)


def _match_paren(s: str, open_pos: int) -> int:
    depth = 0
    for i in range(open_pos, len(s)):
        if s[i] == "(":
            depth += 1
        elif s[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    return -1


_DECL_RE = re.compile(r"(?<![\w$.])([A-Za-z_$][\w$]*)\s*\(")


@dataclass(frozen=True)
class MethodSpan:
    name: str
    decl_offset: int  # start of the line holding the method name
    end_offset: int  # one past the closing brace
    start_line: int
    end_line: int


def find_method(text: str, name: str) -> Optional[MethodSpan]:
    """Locate the declaration of method ``name`` (the first one with a body)."""
    masked = mask(text)
    for m in re.finditer(r"(?<![\w$.])" + re.escape(name) + r"\s*\(", masked):
        before = masked[line_start(masked, m.start()):m.start()]
        prev_words = _WORD.findall(before)
        if not prev_words or prev_words[-1] in ("new", "return", "throw", "else"):
            continue
        if re.search(r"[=(,.!]\s*$", before):
            continue
        close = _match_paren(masked, m.end() - 1)
        if close < 0:
            continue
        rest = masked[close + 1:]
        tail = re.match(r"\s*(throws\s+[\w.$<>,\s]+?)?\s*\{", rest)
        if not tail:
            continue
        open_brace = close + 1 + tail.end() - 1
        end = match_brace(masked, open_brace)
        if end < 0:
            continue
        decl = line_start(text, m.start())
        return MethodSpan(name, decl, end + 1, line_of(text, decl), line_of(text, end))
    return None


def first_method_name(code: str) -> Optional[str]:
    """Name of the first method declared in a code snippet."""
    masked = mask(code)
    for m in _DECL_RE.finditer(masked):
        name = m.group(1)
        if name in JAVA_KEYWORDS:
            continue
        before = masked[line_start(masked, m.start()):m.start()]
        words = _WORD.findall(before)
        if not words or words[-1] in ("new", "return", "throw"):
            continue
        if re.search(r"[=(,.!]\s*$", before):
            continue
        close = _match_paren(masked, m.end() - 1)
        if close > 0 and re.match(r"\s*(throws\s+[\w.$<>,\s]+?)?\s*\{", masked[close + 1:]):
            return name
    return None


_CALL_RE = re.compile(r"(?:([A-Za-z_$][\w$]*|\))\s*\.\s*)?([A-Za-z_$][\w$]*)\s*\(")


def call_sites(code: str) -> list[tuple[Optional[str], str]]:
    """Lexical (receiver, method) pairs invoked in ``code``; constructors and keywords skipped."""
    masked = mask(code)
    out = []
    decl = first_method_name(code)
    skipped_decl = False
    for m in _CALL_RE.finditer(masked):
        name = m.group(2)
        if name in JAVA_KEYWORDS:
            continue
        if m.group(1) is None and re.search(r"\bnew\s+$", masked[max(0, m.start(2) - 8):m.start(2)]):
            continue
        if name == decl and not skipped_decl and m.group(1) is None:
            skipped_decl = True
            continue
        out.append((m.group(1), name))
    return out


_TOKEN_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")


def tokenize(text: str) -> list[str]:
    """Identifier-aware word tokens: split on non-alphanumerics and camelCase, lowercased."""
    out = []
    for chunk in re.split(r"[^A-Za-z0-9]+", text):
        if chunk:
            out.extend(t.lower() for t in _TOKEN_RE.findall(chunk))
    return out


def fqcn_from_path(path: str) -> str:
    path = path.replace("\\", "/")
    for root in ("src/main/java/", "src/test/java/", "src/"):
        if root in path:
            path = path.split(root, 1)[1]
            break
    return path.removesuffix(".java").replace("/", ".")
