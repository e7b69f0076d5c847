"""Shared helpers: seeded random tree generation for property tests."""

import random

import pytest

from treenc.dom import DomNode, DomTree

TAGS = ("div", "section", "ul", "li", "p", "h2", "span", "td", "table", "b")


def random_tree(rng: random.Random, n_nodes: int, interest: str = "camping",
                all_labeled: bool = True, max_children: int | None = None) -> DomTree:
    """Random tree with depth-first ids: random shape, then a preorder walk.

    Texts are unique per node so tests can track node identity across
    transformations.
    """
    parents = [None]
    for i in range(1, n_nodes):
        if max_children is None:
            parents.append(rng.randrange(i))
        else:
            candidates = [p for p in range(i)
                          if sum(1 for q in parents if q == p) < max_children]
            parents.append(rng.choice(candidates) if candidates else rng.randrange(i))
    children = [[] for _ in range(n_nodes)]
    for i in range(1, n_nodes):
        children[parents[i]].append(i)

    order = []
    stack = [0]
    while stack:
        nid = stack.pop()
        order.append(nid)
        stack.extend(reversed(children[nid]))
    new_id = {old: new for new, old in enumerate(order)}

    nodes = [None] * n_nodes
    for old in range(n_nodes):
        nid = new_id[old]
        parent = None if parents[old] is None else new_id[parents[old]]
        label = rng.randint(0, 1) if all_labeled else rng.choice([0, 1, None])
        nodes[nid] = DomNode(id=nid, parent_id=parent, tag=rng.choice(TAGS),
                             text=f"n{old}", label=label)
    return DomTree(interest=interest, nodes=tuple(nodes))


@pytest.fixture
def rng():
    return random.Random(20240817)
