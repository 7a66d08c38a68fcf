"""
    Sorted list of scored items with a deterministic order.

    Items are kept in ascending order of their rank key; RankedItem builds the
    key (-score, tie_break) so the highest score comes first and ties fall back
    to the tie-break value (an entity id, a relation-name tuple...).
    An optional capacity turns the list into a running top-K.
"""

from __future__ import annotations

from typing import Any, Generic, Iterator, TypeVar

__docformat__ = 'reStructuredText'

T = TypeVar('T')


class RankedItem(Generic[T]):
    """ Item stored in a RankedList: the payload plus its score and tie-break. """

    def __init__(self, value: T, score: float, tie_break: Any) -> None:
        self.value = value
        self.score = score
        self.tie_break = tie_break
        self.key = (-score, tie_break)

    def __str__(self) -> str:
        return '({0}, {1})'.format(self.value, self.score)

    def __repr__(self) -> str:
        return f"RankedItem({self.value!r}, {self.score!r}, {self.tie_break!r})"


class RankedList(Generic[T]):
    """ Binary-search insertion list, best item first.

    Attributes:
        capacity (int | None): when set, only the best `capacity` items are kept
        items (list[RankedItem]): the stored items in rank order
    """

    def __init__(self, capacity: int | None = None) -> None:
        """
        :pre: capacity is None or positive
        :raises ValueError: if capacity is not positive
        """
        if capacity is not None and capacity <= 0:
            raise ValueError("RankedList capacity should be positive.")
        self.capacity = capacity
        self.items: list[RankedItem[T]] = []

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> RankedItem[T]:
        return self.items[index]

    def __iter__(self) -> Iterator[RankedItem[T]]:
        return iter(self.items)

    def is_empty(self) -> bool:
        return len(self) == 0

    def clear(self) -> None:
        self.items = []

    def add(self, value: T, score: float, tie_break: Any) -> bool:
        """ Insert an item at its rank position.

        Returns:
            True if the item was kept, False if it fell outside the capacity.

        Complexity:
            Best case O(log n) when the item lands at the end (append).
            Worst case O(n) because later items shift right on insertion.
        """
        item = RankedItem(value, score, tie_break)
        position = self._index_to_add(item)
        if self.capacity is not None and position >= self.capacity:
            return False
        self.items.insert(position, item)
        if self.capacity is not None and len(self.items) > self.capacity:
            self.items.pop()
        return True

    def delete_at_index(self, index: int) -> RankedItem[T]:
        """ Remove and return the item at a given position. """
        if index >= len(self):
            raise IndexError('No such index in the list')
        return self.items.pop(index)

    def values(self) -> list[T]:
        return [item.value for item in self.items]

    def best(self) -> RankedItem[T]:
        """ :raises IndexError: if the list is empty """
        if self.is_empty():
            raise IndexError('Empty ranked list')
        return self.items[0]

    def _index_to_add(self, item: RankedItem[T]) -> int:
        """ Position after every item whose key is <= the new key (stable for equal keys). """
        low = 0
        high = len(self) - 1
        while low <= high:
            mid = (low + high) // 2
            if self.items[mid].key <= item.key:
                low = mid + 1
            else:
                high = mid - 1
        return low
