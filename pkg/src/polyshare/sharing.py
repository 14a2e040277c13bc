"""(2,n) additive secret sharing, its linear primitives, and zero-sharings.

A secret ``s`` in Z_Q is split into components ``s_1..s_n`` with
``sum(s_j) = s mod Q``. Party ``j`` receives every component except
``s_j``, so any two parties together hold all components while a single
party's view is uniformly random.

Components and parties are indexed from 1 to match protocol notation.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import random
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from polyshare.modring import ScaledResidue, ScaleMismatchError, tally


def system_rng() -> random.Random:
    return random.SystemRandom()


def succ(j: int, n: int) -> int:
    """Cyclic successor on {1..n}: the successor of n is 1."""
    return j % n + 1


def pred(j: int, n: int) -> int:
    return (j - 2) % n + 1


@dataclass(frozen=True)
class Sharing:
    values: tuple[int, ...]
    scale: int
    q: int

    def __post_init__(self):
        if len(self.values) < 2:
            raise ValueError("a sharing needs at least two components")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def components(self) -> list[ScaledResidue]:
        return [ScaledResidue(v, self.scale) for v in self.values]

    def view(self, j: int) -> "ShareView":
        if not 1 <= j <= self.n:
            raise IndexError(f"party {j} outside 1..{self.n}")
        entries = self.values[: j - 1] + self.values[j:]
        return ShareView(j, entries, self.scale, self.q)

    def views(self) -> list["ShareView"]:
        return [self.view(j) for j in range(1, self.n + 1)]


@dataclass(frozen=True)
class ShareView:
    """Party ``owner``'s share: all components except ``s_owner``, ascending by index."""

    owner: int
    entries: tuple[int, ...]
    scale: int
    q: int

    @property
    def n(self) -> int:
        return len(self.entries) + 1

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, self.n + 1) if i != self.owner)

    def component(self, idx: int) -> int:
        if idx == self.owner:
            raise KeyError(f"party {self.owner} does not hold component {idx}")
        if not 1 <= idx <= self.n:
            raise IndexError(f"component {idx} outside 1..{self.n}")
        return self.entries[idx - 1 if idx < self.owner else idx - 2]


def share(secret: ScaledResidue, n: int, q: int, rng: random.Random | None = None):
    """Split ``secret`` into a (2,n) sharing.

    Draws ``s_1..s_{n-1}`` uniformly from Z_Q and sets
    ``s_n = secret - sum(s_1..s_{n-1}) mod Q``.

    Returns the full :class:`Sharing` and the list of per-party views
    (index 0 holds party 1's view).
    """
    if n < 2:
        raise ValueError(f"need n >= 2 parties, got {n}")
    if not 0 <= secret.value < q:
        raise ValueError(f"secret {secret.value} not in Z_{q}")
    rng = rng or system_rng()
    rand = [rng.randrange(q) for _ in range(n - 1)]
    last = (secret.value - sum(rand)) % q
    tally(adds=n - 1, draws=n - 1)
    s = Sharing(tuple(rand) + (last,), secret.scale, q)
    return s, s.views()


def _common_scale(items: Iterable[ScaledResidue]) -> int:
    scales = {c.scale for c in items}
    if len(scales) != 1:
        raise ScaleMismatchError(f"components carry mixed scales {sorted(scales)}")
    return scales.pop()


def reconstruct(components: Sequence[ScaledResidue], q: int) -> ScaledResidue:
    scale = _common_scale(components)
    tally(adds=len(components) - 1)
    return ScaledResidue(sum(c.value for c in components) % q, scale)


def reconstruct_views(views: Sequence[ShareView]) -> ScaledResidue:
    """Recombine at least two views into the secret."""
    if len({v.owner for v in views}) < 2:
        raise ValueError("need views from at least two distinct parties")
    n = views[0].n
    if any(v.n != n for v in views) or len({v.scale for v in views}) != 1:
        raise ValueError("views belong to different sharings")
    comps = {}
    for v in views:
        for idx, val in zip(v.indices, v.entries):
            if comps.setdefault(idx, val) != val:
                raise ValueError(f"views disagree on component {idx}")
    return reconstruct([ScaledResidue(comps[i], views[0].scale) for i in range(1, n + 1)], views[0].q)


# -- linear primitives ----------------------------------------------------------

def add_constant(s, c: ScaledResidue):
    """Add a public constant to component 1.

    Works on a full :class:`Sharing` or on a list of views; in the latter
    case only the parties that hold component 1 change their entry.
    """
    if isinstance(s, Sharing):
        if s.scale != c.scale:
            raise ScaleMismatchError(f"constant scale {c.scale} != sharing scale {s.scale}")
        tally(adds=1)
        return Sharing(((s.values[0] + c.value) % s.q,) + s.values[1:], s.scale, s.q)
    out = []
    for v in s:
        if v.scale != c.scale:
            raise ScaleMismatchError(f"constant scale {c.scale} != view scale {v.scale}")
        if v.owner == 1:
            out.append(v)
            continue
        tally(adds=1)
        out.append(ShareView(v.owner, ((v.entries[0] + c.value) % v.q,) + v.entries[1:], v.scale, v.q))
    return out


def add_sharings(a: Sharing, b: Sharing) -> Sharing:
    if a.n != b.n:
        raise ValueError(f"party counts differ: {a.n} vs {b.n}")
    if a.scale != b.scale:
        raise ScaleMismatchError(f"scales differ: {a.scale} vs {b.scale}")
    if a.q != b.q:
        raise ValueError("moduli differ")
    tally(adds=a.n)
    return Sharing(tuple((x + y) % a.q for x, y in zip(a.values, b.values)), a.scale, a.q)


def mul_constant(a: Sharing, c: ScaledResidue) -> Sharing:
    tally(muls=a.n)
    return Sharing(tuple(x * c.value % a.q for x in a.values), a.scale + c.scale, a.q)


# -- zero-sharing -----------------------------------------------------------------

class ZeroSharingMode(str, enum.Enum):
    # each party draws rho_j, sends it to its successor, and uses rho_j - rho_{j-1}
    COMMUNICATION = "communication"
    # party j holds keys k_j, k_{j+1} and uses F(k_j, ctr) - F(k_{j+1}, ctr)
    CORRELATED = "correlated-randomness"


class StaleCounterError(RuntimeError):
    """A zero-sharing counter was used twice."""


class CounterGuard:
    """Rejects reuse of zero-sharing counters."""

    def __init__(self):
        self._seen: set[tuple[int, ...]] = set()

    def claim(self, counter: tuple[int, ...]) -> None:
        counter = tuple(counter)
        if counter in self._seen:
            raise StaleCounterError(f"zero-sharing counter {counter} already used")
        self._seen.add(counter)


def counter_bytes(counter: Sequence[int]) -> bytes:
    return b"".join(struct.pack(">Q", c) for c in counter)


def prf(key: bytes, counter: Sequence[int], q: int) -> int:
    # 512-bit output reduced mod Q (<= 2**63): bias below 2**-449
    digest = hmac.new(key, counter_bytes(counter), hashlib.sha512).digest()
    return int.from_bytes(digest, "big") % q


def communication_component(rho_own: int, rho_prev: int, q: int) -> int:
    tally(adds=1)
    return (rho_own - rho_prev) % q


class CorrelatedZeroSharer:
    """One party's side of the non-interactive zero-sharing."""

    def __init__(self, own_key: bytes, next_key: bytes, q: int):
        self.own_key = own_key
        self.next_key = next_key
        self.q = q
        self.guard = CounterGuard()

    def component(self, counter: Sequence[int]) -> int:
        self.guard.claim(counter)
        tally(adds=1)
        return (prf(self.own_key, counter, self.q) - prf(self.next_key, counter, self.q)) % self.q


def new_key(rng: random.Random) -> bytes:
    return rng.getrandbits(256).to_bytes(32, "big")


def zero_sharing(n: int, mode: ZeroSharingMode | str, q: int, rng: random.Random | None = None,
                 counter: Sequence[int] = (0,), guard: CounterGuard | None = None,
                 scale: int = 0) -> list[ScaledResidue]:
    """All ``n`` components of a fresh zero-sharing, computed as the parties would.

    Inside a protocol session each party computes only its own component
    (see :func:`communication_component` and :class:`CorrelatedZeroSharer`);
    this function runs every party locally for testing and setup.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 parties, got {n}")
    mode = ZeroSharingMode(mode)
    rng = rng or system_rng()
    if guard is not None:
        guard.claim(counter)
    if mode is ZeroSharingMode.COMMUNICATION:
        rho = [rng.randrange(q) for _ in range(n)]
        tally(draws=n)
        vals = [communication_component(rho[j], rho[j - 1], q) for j in range(n)]
    else:
        keys = [new_key(rng) for _ in range(n)]
        vals = [CorrelatedZeroSharer(keys[j], keys[(j + 1) % n], q).component(counter) for j in range(n)]
    return [ScaledResidue(v, scale) for v in vals]
