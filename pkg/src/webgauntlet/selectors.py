"""Selector parsing and matching over document trees.

Supports the selector forms of the agent action protocol: bare tags,
``#id``, ``.class``, ``[attr="value"]``, ``tag:has-text("s")``, the
standalone exact-text form ``text="..."``, and conjunctions such as
``button.primary[type="submit"]``. Combinators (descendant, ``>``, ``+``,
``~``) and other pseudo-classes are deliberately out of scope; see
``docs/selectors.md``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dom import DomNode, DomTree


class SelectorError(ValueError):
    """Invalid selector text, with the character position of the fault."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.reason = message
        self.position = position


@dataclass(frozen=True)
class Selector:
    """A parsed compound selector.

    At least one component is set. ``exact_text`` is exclusive with every
    other component; ``has_text`` and ``exact_text`` never co-occur.
    """

    tag: str | None = None
    id: str | None = None
    classes: frozenset[str] = field(default_factory=frozenset)
    attr_tests: tuple[tuple[str, str], ...] = ()
    has_text: str | None = None
    exact_text: str | None = None

    def __post_init__(self) -> None:
        components = (
            self.tag is not None
            or self.id is not None
            or bool(self.classes)
            or bool(self.attr_tests)
            or self.has_text is not None
        )
        if self.exact_text is not None:
            if components:
                raise ValueError("exact_text selector cannot carry other components")
        elif not components:
            raise ValueError("selector must have at least one component")
        if self.has_text is not None and self.exact_text is not None:
            raise ValueError("has_text and exact_text are mutually exclusive")


_NAME_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_NAME_CHARS = _NAME_START | set("0123456789-")


class _SelectorParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.length = len(text)

    def fail(self, message: str, pos: int | None = None) -> SelectorError:
        return SelectorError(message, self.pos if pos is None else pos)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < self.length else ""

    def read_name(self, what: str) -> str:
        start = self.pos
        if self.peek() not in _NAME_START:
            raise self.fail(f"expected {what}", start)
        while self.peek() in _NAME_CHARS:
            self.pos += 1
        return self.text[start : self.pos]

    def read_quoted(self, what: str) -> str:
        quote = self.peek()
        if quote not in ("'", '"'):
            raise self.fail(f"expected quoted {what}")
        self.pos += 1
        start = self.pos
        end = self.text.find(quote, self.pos)
        if end == -1:
            raise self.fail(f"unterminated {what}", start)
        self.pos = end + 1
        return self.text[start:end]

    def parse(self) -> Selector:
        text = self.text.strip()
        if not text:
            raise self.fail("empty selector", 0)
        self.text = text
        self.length = len(text)

        if text.startswith("text="):
            self.pos = len("text=")
            value = self.read_quoted("text")
            if self.pos != self.length:
                raise self.fail("exact-text selector cannot carry other components")
            return Selector(exact_text=value)

        tag: str | None = None
        sel_id: str | None = None
        classes: set[str] = set()
        attr_tests: list[tuple[str, str]] = []
        has_text: str | None = None

        if self.peek() in _NAME_START:
            tag = self.read_name("tag name").lower()

        while self.pos < self.length:
            ch = self.peek()
            if ch == "#":
                self.pos += 1
                if sel_id is not None:
                    raise self.fail("duplicate id component")
                sel_id = self.read_name("id")
            elif ch == ".":
                self.pos += 1
                classes.add(self.read_name("class name"))
            elif ch == "[":
                self.pos += 1
                name = self.read_name("attribute name").lower()
                if self.peek() != "=":
                    raise self.fail("expected '=' in attribute test")
                self.pos += 1
                value = self.read_quoted("attribute value")
                if self.peek() != "]":
                    raise self.fail("expected ']'")
                self.pos += 1
                attr_tests.append((name, value))
            elif ch == ":":
                start = self.pos
                self.pos += 1
                name = self.read_name("pseudo-class name")
                if name != "has-text":
                    raise self.fail(f"unsupported pseudo-class :{name}", start)
                if self.peek() != "(":
                    raise self.fail("expected '(' after :has-text")
                self.pos += 1
                if has_text is not None:
                    raise self.fail("duplicate :has-text", start)
                has_text = self.read_quoted("text")
                if self.peek() != ")":
                    raise self.fail("expected ')'")
                self.pos += 1
            elif ch in " >+~,":
                raise self.fail(f"combinators are not supported ({ch!r})")
            else:
                raise self.fail(f"unexpected character {ch!r}")

        try:
            return Selector(
                tag=tag,
                id=sel_id,
                classes=frozenset(classes),
                attr_tests=tuple(attr_tests),
                has_text=has_text,
            )
        except ValueError as exc:
            raise self.fail(str(exc), 0) from None


def parse_selector(text: str) -> Selector:
    """Parse selector text; raises :class:`SelectorError` on bad syntax."""
    return _SelectorParser(text).parse()


def matches(node: DomNode, selector: Selector) -> bool:
    """Whether an element node satisfies the selector. Text nodes never match."""
    if not node.is_element():
        return False
    if selector.exact_text is not None:
        return node.full_text().strip() == selector.exact_text
    if selector.tag is not None and node.tag != selector.tag:
        return False
    if selector.id is not None and node.attributes.get("id") != selector.id:
        return False
    if selector.classes and not selector.classes.issubset(node.class_list()):
        return False
    for name, expected in selector.attr_tests:
        if node.attributes.get(name) != expected:
            return False
    if selector.has_text is not None and selector.has_text not in node.full_text():
        return False
    return True


def query(tree: DomTree, selector: Selector) -> list[int]:
    """All matching element node ids, in document order. May be empty."""
    return [node.node_id for node in tree.nodes() if matches(node, selector)]
