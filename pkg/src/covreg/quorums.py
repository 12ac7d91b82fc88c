from collections.abc import Iterable


class Quorum:
    def __init__(self, value: int):
        self.value = value

    def is_reached(self, count: int) -> bool:
        return count >= self.value

    def __repr__(self):
        return "{}({!r})".format(self.__class__.__name__, self.value)


class Quorums:
    """Quorum sizes for ``n`` servers tolerating ``f`` crashes.

    ``f`` defaults to the largest minority, ``(n - 1) // 2``.
    """

    def __init__(self, n: int, f: int | None = None):
        self.n = n
        self.f = (n - 1) // 2 if f is None else f
        self.majority = Quorum(n // 2 + 1)
        self.weak = Quorum(self.f + 1)
        self.spread = Quorum(2 * self.f + 1)

    def __str__(self):
        return "{}".format(self.__dict__)


def intersects(a: Iterable[int], b: Iterable[int]) -> bool:
    return not set(a).isdisjoint(b)
