"""Syntax-tree refinement: merge shadow tokens into parents, then drop them.

A "shadow node" is a token whose kind string equals its source text
(keywords, punctuation). Deleting them outright would lose syntax, so any
parent with at least one shadow child first has its content rebuilt as the
ordered join of its child contents, skipping container children ("block"
and friends), whose own content is always rebuilt from all their children.
The root keeps the whole source as its content.
"""

from __future__ import annotations

from astsearch.syntax.tree import RawAst, RawNode, RefinedAst, RefinedNode


def is_shadow_node(node: RawNode, source: str | bytes) -> bool:
    """True iff the node's kind equals its own source text."""
    if isinstance(source, str):
        source = source.encode("utf-8")
    start, end = node.span
    return node.kind == source[start:end].decode("utf-8", errors="replace")


def _post_order(children: list[list[int]], root: int) -> list[int]:
    order: list[int] = []
    stack: list[tuple[int, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
        else:
            stack.append((node, True))
            for child in reversed(children[node]):
                stack.append((child, False))
    return order


def _join(parts: list[str]) -> str:
    return " ".join(p for p in parts if p)


def refine_tree(
    kinds: list[str],
    contents: list[str],
    children: list[list[int]],
    root: int,
    container_kinds: frozenset[str] | set[str],
) -> RefinedAst:
    """Core refinement over an already-materialized (kind, content) tree.

    Shadow status is kind == content here; refine_ast feeds it source texts,
    and re-running it on a refined tree is a no-op (idempotence).
    """
    n = len(kinds)
    shadow = [kinds[i] == contents[i] for i in range(n)]
    shadow[root] = False  # the root always survives

    new_contents = list(contents)
    for v in _post_order(children, root):
        kids = children[v]
        if not kids or not any(shadow[c] for c in kids):
            continue  # nothing to merge; subtree stays identical
        if kinds[v] in container_kinds:
            # A container's content covers all of its children.
            new_contents[v] = _join([new_contents[c] for c in kids])
        else:
            new_contents[v] = _join(
                [new_contents[c] for c in kids if kinds[c] not in container_kinds]
            )

    # Drop shadow nodes together with their (rare) subtrees.
    dropped = [False] * n
    for v in reversed(_post_order(children, root)):  # parents before children
        if shadow[v] and not dropped[v]:
            dropped[v] = True
        if dropped[v]:
            for c in children[v]:
                dropped[c] = True

    remap: dict[int, int] = {}
    for old_id in range(n):
        if not dropped[old_id]:
            remap[old_id] = len(remap)

    nodes = [
        RefinedNode(
            id=remap[old_id],
            kind=kinds[old_id],
            content=new_contents[old_id],
            children=[remap[c] for c in children[old_id] if not dropped[c]],
        )
        for old_id in range(n)
        if not dropped[old_id]
    ]
    return RefinedAst(nodes=nodes, root=remap[root])


def refine_ast(
    ast: RawAst,
    container_kinds: frozenset[str] | set[str] = frozenset({"block"}),
    root_content_max_chars: int | None = None,
) -> RefinedAst:
    """Refine a raw tree: merge shadow tokens into parents, delete them.

    The refined root's content is the full source text, optionally truncated
    to the embedder's maximum input length.
    """
    kinds = [node.kind for node in ast.nodes]
    contents = [ast.node_text(node) for node in ast.nodes]
    children = [list(node.children) for node in ast.nodes]
    refined = refine_tree(kinds, contents, children, ast.root, container_kinds)
    root_content = ast.source
    if root_content_max_chars is not None:
        root_content = root_content[:root_content_max_chars]
    refined.nodes[refined.root].content = root_content
    return refined
