"""Positional indices and structural attention masks for a DomTree.

Masks are dense additive matrices over {0, -inf}: entry (u, v) is 0 when u
may attend to v. Trees are capped upstream at a few hundred nodes, so dense
storage keeps everything bit-exact and easy to test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dom import DomTree, children_map

NEG_INF = float("-inf")


@dataclass(frozen=True)
class TreeIndex:
    global_idx: np.ndarray   # depth-first position, equals node id
    level_idx: np.ndarray    # depth from root, root = 0
    sibling_idx: np.ndarray  # order among same-parent siblings, root = 0
    path_mask: np.ndarray    # (n, n) float32 over {0, -inf}
    sibling_mask: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.global_idx)


def compute_positional_indices(tree: DomTree) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(tree.nodes)
    global_idx = np.arange(n, dtype=np.int64)
    level_idx = np.zeros(n, dtype=np.int64)
    sibling_idx = np.zeros(n, dtype=np.int64)
    seen_children: list[int] = [0] * n
    for node in tree.nodes:
        if node.parent_id is not None:
            level_idx[node.id] = level_idx[node.parent_id] + 1
            sibling_idx[node.id] = seen_children[node.parent_id]
            seen_children[node.parent_id] += 1
    return global_idx, level_idx, sibling_idx


def compute_path_mask(tree: DomTree) -> np.ndarray:
    """(u, v) unmasked iff u and v lie on a common root-to-node path."""
    n = len(tree.nodes)
    mask = np.full((n, n), NEG_INF, dtype=np.float32)
    np.fill_diagonal(mask, 0.0)
    for node in tree.nodes:
        anc = node.parent_id
        while anc is not None:
            mask[node.id, anc] = 0.0
            mask[anc, node.id] = 0.0
            anc = tree.nodes[anc].parent_id
    return mask


def compute_sibling_mask(tree: DomTree) -> np.ndarray:
    """(u, v) unmasked iff u and v share a parent; every node sees itself."""
    n = len(tree.nodes)
    mask = np.full((n, n), NEG_INF, dtype=np.float32)
    np.fill_diagonal(mask, 0.0)
    for sibs in children_map(tree):
        for u in sibs:
            for v in sibs:
                mask[u, v] = 0.0
    return mask


def compute_tree_index(tree: DomTree) -> TreeIndex:
    global_idx, level_idx, sibling_idx = compute_positional_indices(tree)
    return TreeIndex(
        global_idx=global_idx,
        level_idx=level_idx,
        sibling_idx=sibling_idx,
        path_mask=compute_path_mask(tree),
        sibling_mask=compute_sibling_mask(tree),
    )


def mask_grid(mask: np.ndarray) -> str:
    """Render a mask as a text grid: '0' for unmasked, 'X' for -inf rows."""
    return "\n".join(
        "".join("0" if np.isfinite(cell) else "X" for cell in row) for row in mask
    )
