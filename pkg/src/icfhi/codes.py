"""ICF code grammar and the tree of available codes.

Codes are a component letter (b, s, d, e) followed by 0, 1, 3, 4 or 5
digits; the digit count encodes the hierarchy level and the parent of a
code is a prefix of it.  Trees contain only the codes observed in the
input plus their ancestors, under one synthetic root.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import CodeParseError, DataError

COMPONENTS = ("b", "d", "e", "s")

ROOT_LEVEL = -1

# digit count -> hierarchy level; two-digit codes do not exist in the ICF
_LEVEL_BY_DIGITS = {0: 0, 1: 1, 3: 2, 4: 3, 5: 4}

# level -> text length of the parent code ("b28013" -> "b2801" -> "b280" -> "b2" -> "b")
_PARENT_TEXT_LEN = {4: 5, 3: 4, 2: 2, 1: 1}


@dataclass(frozen=True, order=True)
class IcfCode:
    """A parsed ICF code: component letter plus level-encoding digits."""

    component: str
    digits: str = ""

    def __post_init__(self):
        if self.component not in COMPONENTS:
            raise CodeParseError(f"unknown ICF component letter in {self.text!r}")
        if not self.digits.isdigit() and self.digits != "":
            raise CodeParseError(f"non-digit characters in ICF code {self.text!r}")
        if len(self.digits) not in _LEVEL_BY_DIGITS:
            raise CodeParseError(
                f"ICF code {self.text!r} has {len(self.digits)} digits; "
                "valid digit counts are 0, 1, 3, 4 or 5"
            )

    @property
    def text(self) -> str:
        return self.component + self.digits

    @property
    def level(self) -> int:
        return _LEVEL_BY_DIGITS[len(self.digits)]

    def parent(self) -> "IcfCode | None":
        """Parent code by prefix truncation; None for a bare component (parent is the root)."""
        if self.level == 0:
            return None
        return parse_code(self.text[: _PARENT_TEXT_LEN[self.level]])

    def ancestors(self) -> Iterator["IcfCode"]:
        """All proper ancestors, nearest first, excluding the root."""
        code = self.parent()
        while code is not None:
            yield code
            code = code.parent()

    def __str__(self) -> str:
        return self.text


def parse_code(text: str) -> IcfCode:
    """Parse ICF code text such as ``b28013``; qualifier suffixes are rejected."""
    if not isinstance(text, str) or not text:
        raise CodeParseError(f"empty or non-string ICF code: {text!r}")
    head, tail = text[0], text[1:]
    if head not in COMPONENTS:
        raise CodeParseError(f"unknown ICF component letter in {text!r}")
    if tail and not tail.isdigit():
        raise CodeParseError(
            f"malformed ICF code {text!r}: expected only digits after the "
            "component letter (qualifier separators such as '.' or '+' are not codes)"
        )
    if len(tail) not in _LEVEL_BY_DIGITS:
        raise CodeParseError(
            f"ICF code {text!r} has {len(tail)} digits; valid digit counts are 0, 1, 3, 4 or 5"
        )
    return IcfCode(head, tail)


def parent_of(code: IcfCode) -> "IcfCode | None":
    """Parent of ``code``; None denotes the synthetic root."""
    return code.parent()


def codes_from_text(text: str) -> list[IcfCode]:
    """Parse a newline-delimited code list; blank lines and '#' comments skipped."""
    codes = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            codes.append(parse_code(line))
    return codes


class Node:
    """One tree position: an ICF code (or the root) with its children and,
    during an evaluation, attached qualifiers and a calculated value."""

    __slots__ = ("code", "children", "attached", "calculated", "consumed")

    def __init__(self, code: "IcfCode | None"):
        self.code = code  # None marks the synthetic root
        self.children: list[Node] = []
        self.attached: list = []
        self.calculated = None
        self.consumed = False

    @property
    def level(self) -> int:
        return ROOT_LEVEL if self.code is None else self.code.level

    @property
    def is_root(self) -> bool:
        return self.code is None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self) -> str:
        name = "root" if self.code is None else self.code.text
        return f"Node({name}, children={len(self.children)}, attached={len(self.attached)})"


class IcfTree:
    """Hierarchy of available ICF codes under one synthetic root (level -1)."""

    def __init__(self, nodes: "dict[IcfCode, Node]", root: Node):
        self.root = root
        self._by_code = nodes
        # set by engine.attach(): the evaluation reference day of this copy
        self.reference_day: "int | None" = None

    def node_for(self, code: IcfCode) -> Node:
        try:
            return self._by_code[code]
        except KeyError:
            raise DataError(f"ICF code {code.text} is not part of this tree") from None

    def __contains__(self, code: IcfCode) -> bool:
        return code in self._by_code

    def __len__(self) -> int:
        # includes the root
        return len(self._by_code) + 1

    @property
    def codes(self) -> "list[IcfCode]":
        return sorted(self._by_code)

    @property
    def deepest_level(self) -> int:
        return max((c.level for c in self._by_code), default=ROOT_LEVEL)

    def nodes_at_level(self, level: int) -> "list[Node]":
        """Nodes of one level in alphabetical code order; level -1 is the root alone."""
        if level == ROOT_LEVEL:
            return [self.root]
        return [self._by_code[c] for c in sorted(self._by_code) if c.level == level]

    def iter_nodes(self) -> Iterator[Node]:
        yield self.root
        for code in sorted(self._by_code):
            yield self._by_code[code]

    def copy_skeleton(self) -> "IcfTree":
        """Fresh tree with the same structure and no attachments or results."""
        return build_tree(self._by_code)


def build_tree(codes: Iterable[IcfCode | str]) -> IcfTree:
    """Build the tree spanned by ``codes``: the codes themselves, every
    ancestor up to the bare components, and one synthetic root."""
    parsed: set[IcfCode] = set()
    for code in codes:
        parsed.add(parse_code(code) if isinstance(code, str) else code)
    if not parsed:
        raise DataError("cannot build an ICF tree from an empty code set")

    closed: set[IcfCode] = set()
    for code in parsed:
        closed.add(code)
        closed.update(code.ancestors())

    nodes = {code: Node(code) for code in closed}
    root = Node(None)
    for code in sorted(closed):
        parent = code.parent()
        holder = root if parent is None else nodes[parent]
        holder.children.append(nodes[code])
    return IcfTree(nodes, root)
