"""In-process r-tree over points, quadratic-split insertion.

Rectangles are (min_x, min_y, max_x, max_y) tuples; points are stored as
degenerate rectangles.  Fanout is capped at ``max_entries`` with a minimum
fill of ceil(max/2) everywhere except the root.  No deletes — the store
is append-only, so neither reinsertion nor condensation is needed.
"""

from __future__ import annotations

import math


class InvariantViolation(AssertionError):
    """A structural audit found a broken tree property."""


def _cover(a: tuple, b: tuple) -> tuple:
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def _area(r: tuple) -> float:
    return (r[2] - r[0]) * (r[3] - r[1])


def _enlargement(r: tuple, add: tuple) -> float:
    return _area(_cover(r, add)) - _area(r)


def _intersects(a: tuple, b: tuple) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


class _Node:
    __slots__ = ("leaf", "entries", "rect")

    def __init__(self, leaf: bool, entries: list):
        self.leaf = leaf
        self.entries = entries    # leaf: (rect, item); internal: _Node
        self.rect = self._tight()

    def _tight(self) -> tuple:
        rects = [e[0] for e in self.entries] if self.leaf else \
            [c.rect for c in self.entries]
        out = rects[0]
        for r in rects[1:]:
            out = _cover(out, r)
        return out

    def refit(self) -> None:
        self.rect = self._tight()


class RTree:
    """Spatial index mapping (x, y) points to opaque items."""

    def __init__(self, max_entries: int = 16):
        if max_entries < 4:
            raise ValueError("max_entries must be at least 4")
        self.max_entries = max_entries
        self.min_entries = math.ceil(max_entries / 2)
        self._root: _Node | None = None
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def insert(self, x: float, y: float, item) -> None:
        rect = (x, y, x, y)
        if self._root is None:
            self._root = _Node(True, [(rect, item)])
            self._count = 1
            return
        sibling = self._insert(self._root, rect, item)
        if sibling is not None:
            self._root = _Node(False, [self._root, sibling])
        self._count += 1

    def _insert(self, node: _Node, rect: tuple, item) -> _Node | None:
        if node.leaf:
            node.entries.append((rect, item))
        else:
            child = self._choose(node.entries, rect)
            sibling = self._insert(child, rect, item)
            if sibling is not None:
                node.entries.append(sibling)
        node.refit()
        if len(node.entries) > self.max_entries:
            return self._split(node)
        return None

    @staticmethod
    def _choose(children: list, rect: tuple) -> _Node:
        best, best_key = None, None
        for c in children:
            key = (_enlargement(c.rect, rect), _area(c.rect))
            if best_key is None or key < best_key:
                best, best_key = c, key
        return best

    def _split(self, node: _Node) -> _Node:
        """Guttman's quadratic split; mutates ``node`` into group 1."""
        entries = node.entries
        rect_of = (lambda e: e[0]) if node.leaf else (lambda e: e.rect)

        worst, seeds = -math.inf, (0, 1)
        for i in range(len(entries)):
            ri = rect_of(entries[i])
            for j in range(i + 1, len(entries)):
                rj = rect_of(entries[j])
                waste = _area(_cover(ri, rj)) - _area(ri) - _area(rj)
                if waste > worst:
                    worst, seeds = waste, (i, j)

        g1, g2 = [entries[seeds[0]]], [entries[seeds[1]]]
        r1, r2 = rect_of(g1[0]), rect_of(g2[0])
        rest = [e for k, e in enumerate(entries) if k not in seeds]
        while rest:
            # must a group take everything left to reach minimum fill?
            if len(g1) + len(rest) == self.min_entries:
                g1.extend(rest)
                for e in rest:
                    r1 = _cover(r1, rect_of(e))
                break
            if len(g2) + len(rest) == self.min_entries:
                g2.extend(rest)
                for e in rest:
                    r2 = _cover(r2, rect_of(e))
                break
            pick, pick_key = None, None
            for k, e in enumerate(rest):
                r = rect_of(e)
                d1, d2 = _enlargement(r1, r), _enlargement(r2, r)
                key = -abs(d1 - d2)
                if pick_key is None or key < pick_key:
                    pick, pick_key, pd = k, key, (d1, d2)
            e = rest.pop(pick)
            r = rect_of(e)
            take_first = (pd[0], _area(r1), len(g1)) <= (pd[1], _area(r2), len(g2))
            if take_first:
                g1.append(e)
                r1 = _cover(r1, r)
            else:
                g2.append(e)
                r2 = _cover(r2, r)

        node.entries = g1
        node.refit()
        return _Node(node.leaf, g2)

    def search(self, min_x: float, min_y: float, max_x: float, max_y: float) -> list:
        """Items whose point lies in the rectangle, bounds inclusive."""
        if min_x > max_x or min_y > max_y:
            raise ValueError("rectangle bounds out of order")
        out: list = []
        if self._root is None:
            return out
        query = (min_x, min_y, max_x, max_y)
        stack = [self._root]
        while stack:
            node = stack.pop()
            if not _intersects(node.rect, query):
                continue
            if node.leaf:
                out.extend(item for rect, item in node.entries
                           if _intersects(rect, query))
            else:
                stack.extend(node.entries)
        return out

    def audit(self) -> int:
        """Walk the whole tree checking structure; returns the item count.

        Raises InvariantViolation on: fill-factor breach (root exempt),
        loose or wrong covering rectangles, or leaves at unequal depths.
        """
        if self._root is None:
            if self._count != 0:
                raise InvariantViolation("empty tree with nonzero count")
            return 0
        leaf_depths: set[int] = set()
        total = 0
        stack = [(self._root, 0, True)]
        while stack:
            node, depth, is_root = stack.pop()
            n = len(node.entries)
            if n > self.max_entries:
                raise InvariantViolation(f"node overflow: {n} entries")
            if not is_root and n < self.min_entries:
                raise InvariantViolation(f"underfilled node: {n} < {self.min_entries}")
            if is_root and not node.leaf and n < 2:
                raise InvariantViolation("internal root with fewer than 2 children")
            if node.rect != node._tight():
                raise InvariantViolation("covering rectangle is not tight")
            if node.leaf:
                leaf_depths.add(depth)
                total += n
                for rect, _ in node.entries:
                    if not (node.rect[0] <= rect[0] and node.rect[1] <= rect[1]
                            and rect[2] <= node.rect[2] and rect[3] <= node.rect[3]):
                        raise InvariantViolation("leaf entry outside node rectangle")
            else:
                for child in node.entries:
                    stack.append((child, depth + 1, False))
        if len(leaf_depths) != 1:
            raise InvariantViolation(f"leaves at unequal depths: {sorted(leaf_depths)}")
        if total != self._count:
            raise InvariantViolation(f"count mismatch: walked {total}, recorded {self._count}")
        return total
