"""Synthetic labeled corpora for self-contained experiments.

Two task variants share one tree skeleton:

* ``text_task``: positive nodes carry tokens from a per-interest product
  lexicon, negatives draw from a generic pool, so text alone suffices.
* ``structure_task``: every text comes from the same generic pool. A node is
  positive iff it is a list item inside a sibling leaf group of three or
  more under a list container; whether a generated group is large (3-6
  items, positive) or a pair (negative) is a coin flip, so per-node text
  carries no label information and sibling context is required.

Trees come out pre-simplified: no empty leaves, no single-child nodes, no
pruned tags.
"""

from __future__ import annotations

import random

from .dom import DomNode, DomTree

TASKS = ("text_task", "structure_task")

INTERESTS = (
    "camping", "hiking", "fishing", "painting", "baking", "cycling",
    "climbing", "gardening", "knitting", "bowling", "archery", "sailing",
    "skiing", "surfing", "yoga", "tennis", "pottery", "drawing", "chess",
    "astronomy",
)

# Shared generic pool: all structure-task texts, text-task negatives.
GENERIC_TOKENS = (
    "amber", "arch", "basin", "beacon", "birch", "bluff", "breeze", "brook",
    "canyon", "cedar", "cliff", "cloud", "coast", "coral", "cove", "creek",
    "crest", "dale", "dawn", "drift", "dune", "ember", "fern", "field",
    "flint", "fog", "forge", "gale", "glen", "grove", "gulch", "harbor",
    "haven", "heath", "hill", "hollow", "isle", "knoll", "lagoon", "ledge",
    "marsh", "meadow", "mesa", "mist", "moor", "oak", "opal", "pier",
    "pine", "plain", "pond", "quarry", "reef", "ridge", "river", "shore",
    "slope", "spring", "stone", "summit", "thicket", "tide", "trail",
    "vale", "valley", "willow",
)

# Disjoint product-word chunks, six per interest, in INTERESTS order.
PRODUCT_TOKENS = (
    "tent", "lantern", "stove", "tarp", "thermos", "headlamp",
    "boots", "poles", "daypack", "compass", "canteen", "gaiters",
    "rod", "reel", "tackle", "lure", "bobber", "waders",
    "easel", "brush", "canvas", "palette", "pigment", "smock",
    "whisk", "spatula", "sifter", "mixer", "ramekin", "parchment",
    "helmet", "pannier", "pump", "saddle", "fender", "derailleur",
    "harness", "carabiner", "chalk", "crampon", "belay", "rope",
    "trowel", "pruner", "hose", "seedling", "mulch", "planter",
    "yarn", "needles", "bobbin", "skein", "swift", "blocker",
    "pins", "kegel", "rosin", "lane", "glove", "towel",
    "bow", "arrow", "quiver", "fletching", "armguard", "target",
    "mast", "rudder", "winch", "halyard", "jib", "cleat",
    "skis", "bindings", "goggles", "wax", "beanie", "piste",
    "surfboard", "leash", "wetsuit", "fins", "rashguard", "paddle",
    "mat", "strap", "bolster", "blanket", "block", "wheel",
    "racket", "overgrip", "dampener", "string", "visor", "sweatband",
    "kiln", "clay", "rib", "sponge", "bat", "glaze",
    "pencil", "charcoal", "eraser", "blender", "sketchbook", "fixative",
    "clock", "board", "pieces", "bag", "scoresheet", "timer",
    "telescope", "eyepiece", "tripod", "finder", "filter", "starmap",
)

_LIST_TAG = "ul"
_ITEM_TAG = "li"

# Large-group probability balancing expected item counts: large groups hold
# 3-6 items (mean 4.5) versus pairs of 2, so 2/6.5 puts roughly half of all
# list items in positive groups.
_P_LARGE_GROUP = 2.0 / 6.5


def interest_lexicon() -> dict[str, list[str]]:
    """Per-interest product token lists (six words each)."""
    return {
        si: list(PRODUCT_TOKENS[6 * i: 6 * (i + 1)])
        for i, si in enumerate(INTERESTS)
    }


class _GenNode:
    __slots__ = ("tag", "text", "label", "children")

    def __init__(self, tag, text="", label=0, children=None):
        self.tag = tag
        self.text = text
        self.label = label
        self.children = children or []

    def size(self):
        return 1 + sum(c.size() for c in self.children)


def _phrase(rng: random.Random, pool, lo: int, hi: int) -> str:
    return " ".join(rng.choice(pool) for _ in range(rng.randint(lo, hi)))


def _make_block(rng: random.Random, level: int, max_level: int) -> _GenNode:
    roll = rng.random()
    if roll < 0.50:
        # list group: coin flip decides large (positive) or pair (negative)
        if rng.random() < _P_LARGE_GROUP:
            k, label = rng.randint(3, 6), 1
        else:
            k, label = 2, 0
        items = [
            _GenNode(_ITEM_TAG, _phrase(rng, GENERIC_TOKENS, 1, 2), label)
            for _ in range(k)
        ]
        return _GenNode(_LIST_TAG, "", 0, items)
    if roll < 0.70:
        # decoy: a large leaf group under the wrong tags, always negative
        items = [
            _GenNode("p", _phrase(rng, GENERIC_TOKENS, 1, 2), 0)
            for _ in range(rng.randint(3, 5))
        ]
        return _GenNode("div", "", 0, items)
    if roll < 0.80 or level + 2 > max_level:
        return _GenNode("p", _phrase(rng, GENERIC_TOKENS, 4, 9), 0)
    return _make_section(rng, level, max_level)


def _make_section(rng: random.Random, level: int, max_level: int) -> _GenNode:
    children = [_GenNode("h2", _phrase(rng, GENERIC_TOKENS, 1, 3), 0)]
    for _ in range(rng.randint(2, 3)):
        children.append(_make_block(rng, level + 1, max_level))
    return _GenNode("section", "", 0, children)


def _flatten(root: _GenNode, interest: str) -> DomTree:
    nodes = []
    stack = [(root, None)]
    while stack:
        gn, parent = stack.pop()
        nid = len(nodes)
        nodes.append(DomNode(id=nid, parent_id=parent, tag=gn.tag,
                             text=gn.text, label=gn.label))
        for child in reversed(gn.children):
            stack.append((child, nid))
    return DomTree(interest=interest, nodes=tuple(nodes))


def _assign_text_task_texts(rng: random.Random, root: _GenNode,
                            pt_tokens: list[str]) -> None:
    stack = [root]
    while stack:
        gn = stack.pop()
        if gn.text:
            if gn.label == 1:
                gn.text = _phrase(rng, pt_tokens, 1, 2)
            else:
                gn.text = _phrase(rng, GENERIC_TOKENS, 1,
                                  min(3, max(1, len(gn.text.split()))))
        stack.extend(gn.children)


def generate_synthetic_corpus(n_trees: int, seed: int, task: str = "structure_task",
                              n_interests: int | None = None):
    """Generate labeled trees plus the per-interest product lexicon.

    Interests rotate round-robin over the built-in list. Trees hold 30-120
    nodes with leaves at depth 3-8.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    rng = random.Random(seed)
    lexicon = interest_lexicon()
    n_sis = len(INTERESTS) if n_interests is None else min(n_interests, len(INTERESTS))
    n_sis = max(1, n_sis)

    trees = []
    for i in range(n_trees):
        interest = INTERESTS[i % n_sis]
        target = rng.randint(35, 105)
        max_level = rng.randint(4, 8)
        root = _GenNode("div", "", 0)
        for _ in range(200):
            if root.size() >= target:
                break
            section = _make_section(rng, 1, max_level)
            if root.size() + section.size() > 118:
                if len(root.children) >= 2:
                    break
                continue
            root.children.append(section)
        while root.size() < 30 or len(root.children) < 2:
            root.children.append(
                _GenNode("p", _phrase(rng, GENERIC_TOKENS, 4, 9), 0)
            )
        if task == "text_task":
            _assign_text_task_texts(rng, root, lexicon[interest])
        trees.append(_flatten(root, interest))

    if task == "structure_task":
        return trees, {si: [] for si in INTERESTS[:n_sis]}
    return trees, {si: lexicon[si] for si in INTERESTS[:n_sis]}
