"""Document tree model, HTML parsing, and canonical serialization.

The simulator renders pages into :class:`DomTree` objects and ships them to
agents as serialized HTML. Only the subset grammar documented in
``docs/html-subset.md`` is supported: a whitelist of tags, void elements that
may appear unclosed, double- or single-quoted attributes, and standard
named/numeric character references. Trees are immutable after construction
and safe to share between sessions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ELEMENT = "element"
TEXT = "text"

# Tags the page generator may emit. Anything else is a parse error.
TAG_WHITELIST = frozenset(
    {
        "html", "head", "title", "body",
        "h1", "h2", "h3", "h4", "h5", "h6",
        "div", "span", "p", "strong", "em", "small",
        "form", "label", "input", "textarea", "select", "option", "button",
        "table", "thead", "tbody", "tr", "th", "td",
        "ul", "ol", "li",
        "a", "img", "br", "hr", "nav", "header", "footer", "section",
    }
)

# Void elements carry no content and may be written without a close tag.
VOID_TAGS = frozenset({"br", "img", "input", "hr"})

NAMED_ENTITIES = {
    "amp": "&",
    "lt": "<",
    "gt": ">",
    "quot": '"',
    "apos": "'",
    "nbsp": " ",
}


class DomError(ValueError):
    """Parse or tree-invariant failure, carrying the input byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.reason = message
        self.offset = offset


@dataclass
class DomNode:
    """One node of a document tree: an element or a text run.

    ``node_id`` is unique within its tree and assigned in document order
    starting at 1, which keeps provenance mapping stable across rebuilds.
    """

    node_id: int
    kind: str
    tag: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)
    text: str = ""
    children: list[DomNode] = field(default_factory=list)

    def is_element(self) -> bool:
        return self.kind == ELEMENT

    def class_list(self) -> list[str]:
        return self.attributes.get("class", "").split()

    def full_text(self) -> str:
        """Concatenated text of this node and all descendants, in order."""
        if self.kind == TEXT:
            return self.text
        parts: list[str] = []
        stack = list(reversed(self.children))
        while stack:
            node = stack.pop()
            if node.kind == TEXT:
                parts.append(node.text)
            else:
                stack.extend(reversed(node.children))
        return "".join(parts)


class DomTree:
    """A rooted document tree with document-order node access."""

    def __init__(self, root: DomNode):
        self.root = root
        self._nodes: list[DomNode] = []
        self._by_id: dict[int, DomNode] = {}
        for node in _walk(root):
            self._nodes.append(node)
            if node.node_id in self._by_id:
                raise DomError(f"duplicate node_id {node.node_id}", 0)
            self._by_id[node.node_id] = node
        self._check_invariants()

    def _check_invariants(self) -> None:
        seen_ids: set[str] = set()
        for node in self._nodes:
            if node.kind == TEXT:
                if node.children or node.attributes:
                    raise DomError("text node with children or attributes", 0)
            elif node.kind == ELEMENT:
                value = node.attributes.get("id")
                if value is not None:
                    if value in seen_ids:
                        raise DomError(f"duplicate id attribute {value!r}", 0)
                    seen_ids.add(value)
            else:
                raise DomError(f"unknown node kind {node.kind!r}", 0)

    def nodes(self) -> list[DomNode]:
        """All nodes in document (pre-order) sequence."""
        return list(self._nodes)

    def node(self, node_id: int) -> DomNode:
        return self._by_id[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._by_id

    def element_by_attr_id(self, value: str) -> DomNode | None:
        for node in self._nodes:
            if node.kind == ELEMENT and node.attributes.get("id") == value:
                return node
        return None

    def __len__(self) -> int:
        return len(self._nodes)


def _walk(root: DomNode):
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def structurally_equal(a: DomNode, b: DomNode) -> bool:
    """Deep equality on kind/tag/attributes/text/child order; ignores node_id."""
    if a.kind != b.kind:
        return False
    if a.kind == TEXT:
        return a.text == b.text
    if a.tag != b.tag or dict(a.attributes) != dict(b.attributes):
        return False
    if len(a.children) != len(b.children):
        return False
    return all(structurally_equal(x, y) for x, y in zip(a.children, b.children))


# ---------------------------------------------------------------------------
# Parsing


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.length = len(text)
        self.next_node_id = 1

    def fail(self, message: str, pos: int | None = None) -> DomError:
        at = self.pos if pos is None else pos
        return DomError(message, len(self.text[:at].encode("utf-8")))

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < self.length else ""

    def _new_id(self) -> int:
        node_id = self.next_node_id
        self.next_node_id += 1
        return node_id

    def parse_document(self) -> DomNode:
        self.skip_whitespace()
        if self.peek() != "<":
            raise self.fail("expected element at document root")
        root = self.parse_element()
        self.skip_whitespace()
        if self.pos < self.length:
            raise self.fail("content after document root")
        return root

    def skip_whitespace(self) -> None:
        while self.pos < self.length and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def read_name(self) -> str:
        start = self.pos
        while self.pos < self.length and (
            self.text[self.pos].isalnum() or self.text[self.pos] in "-_"
        ):
            self.pos += 1
        return self.text[start : self.pos]

    def parse_element(self) -> DomNode:
        tag_open_pos = self.pos
        assert self.peek() == "<"
        self.pos += 1
        if self.peek() == "/":
            raise self.fail("stray close tag", tag_open_pos)
        name = self.read_name().lower()
        if not name:
            raise self.fail("malformed tag name", tag_open_pos)
        if name not in TAG_WHITELIST:
            raise self.fail(f"unknown tag <{name}>", tag_open_pos)
        node = DomNode(node_id=self._new_id(), kind=ELEMENT, tag=name)
        self.parse_attributes(node)
        self_closing = False
        if self.peek() == "/":
            self.pos += 1
            self_closing = True
        if self.peek() != ">":
            raise self.fail("malformed attribute list")
        self.pos += 1
        if self_closing or name in VOID_TAGS:
            return node
        self.parse_content(node)
        # parse_content stops at "</"; consume and match the close tag
        close_pos = self.pos
        if self.pos >= self.length:
            raise self.fail(f"unbalanced tag <{name}>", tag_open_pos)
        self.pos += 2
        close_name = self.read_name().lower()
        if close_name != name:
            raise self.fail(
                f"unbalanced tag: <{name}> closed by </{close_name}>", close_pos
            )
        self.skip_whitespace()
        if self.peek() != ">":
            raise self.fail("malformed close tag", close_pos)
        self.pos += 1
        return node

    def parse_attributes(self, node: DomNode) -> None:
        while True:
            had_space = False
            while self.pos < self.length and self.text[self.pos] in " \t\r\n":
                self.pos += 1
                had_space = True
            ch = self.peek()
            if ch in (">", "/", ""):
                return
            if not had_space:
                raise self.fail("malformed attribute: missing whitespace")
            name_pos = self.pos
            name = self.read_name().lower()
            if not name:
                raise self.fail("malformed attribute name", name_pos)
            if name in node.attributes:
                raise self.fail(f"duplicate attribute {name!r}", name_pos)
            if self.peek() != "=":
                # bare boolean attribute
                node.attributes[name] = ""
                continue
            self.pos += 1
            quote = self.peek()
            if quote not in ("'", '"'):
                raise self.fail("malformed attribute: value must be quoted")
            self.pos += 1
            value_parts: list[str] = []
            while True:
                if self.pos >= self.length:
                    raise self.fail("malformed attribute: unterminated value", name_pos)
                ch = self.text[self.pos]
                if ch == quote:
                    self.pos += 1
                    break
                if ch == "&":
                    value_parts.append(self.parse_entity())
                else:
                    value_parts.append(ch)
                    self.pos += 1
            node.attributes[name] = "".join(value_parts)

    def parse_content(self, parent: DomNode) -> None:
        text_parts: list[str] = []

        def flush_text() -> None:
            if text_parts:
                parent.children.append(
                    DomNode(
                        node_id=self._new_id(), kind=TEXT, text="".join(text_parts)
                    )
                )
                text_parts.clear()

        while self.pos < self.length:
            ch = self.text[self.pos]
            if ch == "<":
                if self.text.startswith("</", self.pos):
                    flush_text()
                    return
                flush_text()
                parent.children.append(self.parse_element())
            elif ch == "&":
                text_parts.append(self.parse_entity())
            elif ch == ">":
                raise self.fail("stray '>' in text content")
            else:
                text_parts.append(ch)
                self.pos += 1
        flush_text()

    def parse_entity(self) -> str:
        start = self.pos
        assert self.peek() == "&"
        end = self.text.find(";", self.pos + 1, self.pos + 12)
        if end == -1:
            raise self.fail("unknown entity: missing ';'", start)
        body = self.text[self.pos + 1 : end]
        self.pos = end + 1
        if body.startswith("#"):
            digits = body[1:]
            try:
                if digits[:1] in ("x", "X"):
                    code = int(digits[1:], 16)
                else:
                    code = int(digits)
            except ValueError:
                raise self.fail(f"unknown entity &{body};", start) from None
            if not 0 < code <= 0x10FFFF:
                raise self.fail(f"unknown entity &{body};", start)
            return chr(code)
        if body in NAMED_ENTITIES:
            return NAMED_ENTITIES[body]
        raise self.fail(f"unknown entity &{body};", start)


def parse_html(text: str) -> DomTree:
    """Parse subset-grammar HTML into a :class:`DomTree`.

    Node ids are assigned in document order starting at 1. Character
    references are decoded into text. Raises :class:`DomError` with a byte
    offset on unbalanced tags, stray close tags, malformed attributes, or
    unknown entities.
    """
    root = _Parser(text).parse_document()
    return DomTree(root)


# ---------------------------------------------------------------------------
# Canonical serialization


def _escape_text(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(value: str) -> str:
    return (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def serialize(tree: DomTree) -> str:
    """Canonical serialization: sorted attributes, minimal entity escaping.

    Equal trees produce byte-identical output, and the output re-parses into
    a structurally equal tree.
    """
    out: list[str] = []
    _serialize_node(tree.root, out)
    return "".join(out)


def serialize_node(node: DomNode) -> str:
    out: list[str] = []
    _serialize_node(node, out)
    return "".join(out)


def _serialize_node(node: DomNode, out: list[str]) -> None:
    if node.kind == TEXT:
        out.append(_escape_text(node.text))
        return
    out.append(f"<{node.tag}")
    for name in sorted(node.attributes):
        out.append(f' {name}="{_escape_attr(node.attributes[name])}"')
    out.append(">")
    if node.tag in VOID_TAGS:
        return
    for child in node.children:
        _serialize_node(child, out)
    out.append(f"</{node.tag}>")


# ---------------------------------------------------------------------------
# Tree construction helpers (used by the renderer and perturbations)


class TreeBuilder:
    """Assigns document-order node ids while building a tree top-down."""

    def __init__(self) -> None:
        self._next = 1

    def element(
        self,
        tag: str,
        attributes: dict[str, str] | None = None,
        children: list[DomNode] | None = None,
    ) -> DomNode:
        if tag not in TAG_WHITELIST:
            raise ValueError(f"tag {tag!r} not in whitelist")
        return DomNode(
            node_id=self._take(),
            kind=ELEMENT,
            tag=tag,
            attributes=dict(attributes or {}),
            children=list(children or []),
        )

    def text(self, value: str) -> DomNode:
        return DomNode(node_id=self._take(), kind=TEXT, text=value)

    def _take(self) -> int:
        node_id = self._next
        self._next += 1
        return node_id


def renumber(root: DomNode) -> dict[int, int]:
    """Re-assign node ids in document order; returns old-id -> new-id map.

    Builders may create nodes out of document order; trees must end up with
    pre-order ids so provenance stays aligned with parse output.
    """
    mapping: dict[int, int] = {}
    next_id = 1
    for node in _walk(root):
        mapping[node.node_id] = next_id
        node.node_id = next_id
        next_id += 1
    return mapping


def copy_node(node: DomNode) -> DomNode:
    """Deep copy preserving node ids."""
    return DomNode(
        node_id=node.node_id,
        kind=node.kind,
        tag=node.tag,
        attributes=dict(node.attributes),
        text=node.text,
        children=[copy_node(child) for child in node.children],
    )
