"""Concrete and refined syntax tree containers.

A RawAst is what a grammar produces: every token (including keywords and
punctuation) is a node, spans are byte ranges into the source. A RefinedAst
is the post-merge tree: content-bearing nodes only, no spans.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from astsearch.errors import ContractViolation


@dataclass
class RawNode:
    id: int
    kind: str
    span: tuple[int, int]  # byte offsets [start, end) into the UTF-8 source
    children: list[int] = field(default_factory=list)


@dataclass
class RawAst:
    nodes: list[RawNode]
    root: int
    source: str

    def __post_init__(self):
        self._source_bytes = self.source.encode("utf-8")

    @property
    def source_bytes(self) -> bytes:
        return self._source_bytes

    def node_text(self, node: RawNode | int) -> str:
        """Source text covered by a node's byte span."""
        if isinstance(node, int):
            node = self.nodes[node]
        start, end = node.span
        return self._source_bytes[start:end].decode("utf-8")

    def parent_map(self) -> dict[int, int]:
        """Child id -> parent id for every non-root node."""
        parents: dict[int, int] = {}
        for node in self.nodes:
            for child in node.children:
                parents[child] = node.id
        return parents

    def validate(self) -> None:
        """Check the tree invariants; raises ContractViolation on the first failure."""
        n = len(self.nodes)
        if n == 0:
            raise ContractViolation("RawAst must contain at least a root node")
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise ContractViolation(f"node ids must be dense 0..n-1, got {node.id} at {i}")
            if len(set(node.children)) != len(node.children):
                raise ContractViolation(f"node {i} has duplicate children")
        if not 0 <= self.root < n:
            raise ContractViolation(f"root id {self.root} out of range")
        parents = self.parent_map()
        if self.root in parents:
            raise ContractViolation("root must not have a parent")
        if len(parents) != n - 1:
            raise ContractViolation(
                f"parent relation must cover exactly n-1 nodes, got {len(parents)} of {n - 1}"
            )
        # Acyclicity + single root: every node must reach the root.
        for node in self.nodes:
            seen = set()
            cur = node.id
            while cur != self.root:
                if cur in seen:
                    raise ContractViolation(f"cycle through node {cur}")
                seen.add(cur)
                if cur not in parents:
                    raise ContractViolation(f"node {cur} is disconnected from the root")
                cur = parents[cur]
        src_len = len(self._source_bytes)
        for node in self.nodes:
            start, end = node.span
            if not (0 <= start <= end <= src_len):
                raise ContractViolation(f"node {node.id} span {node.span} outside source")
            for child in node.children:
                cstart, cend = self.nodes[child].span
                if cstart < start or cend > end:
                    raise ContractViolation(
                        f"child {child} span not contained in parent {node.id} span"
                    )


@dataclass
class RefinedNode:
    id: int
    kind: str
    content: str
    children: list[int] = field(default_factory=list)


@dataclass
class RefinedAst:
    nodes: list[RefinedNode]
    root: int

    def node(self, node_id: int) -> RefinedNode:
        return self.nodes[node_id]

    def parent_map(self) -> dict[int, int]:
        parents: dict[int, int] = {}
        for node in self.nodes:
            for child in node.children:
                parents[child] = node.id
        return parents

    def validate(self) -> None:
        n = len(self.nodes)
        if n == 0:
            raise ContractViolation("RefinedAst must contain at least a root node")
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise ContractViolation(f"node ids must be dense 0..n-1, got {node.id} at {i}")
            if len(set(node.children)) != len(node.children):
                raise ContractViolation(f"node {i} has duplicate children")
        parents = self.parent_map()
        if self.root in parents or len(parents) != n - 1:
            raise ContractViolation("refined tree must keep the tree property")
        for node in self.nodes:
            seen = set()
            cur = node.id
            while cur != self.root:
                if cur in seen or cur not in parents:
                    raise ContractViolation(f"node {cur} breaks the tree property")
                seen.add(cur)
                cur = parents[cur]
