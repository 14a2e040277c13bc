"""Single-round secure product of n factors on n+1 servers.

With (2,n+1) sharings every server holds n of the n+1 components of each
factor. Expanding the product gives (n+1)^n summands, each using one
component per factor; since a summand touches at most n distinct
component indices, some server holds all of them. Servers compute their
assigned summands locally and send the sum to the collector. No
server-to-server communication is needed.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from polyshare.modring import ScaledResidue, tally
from polyshare.sharing import ShareView, share, system_rng


class AssignmentError(ValueError):
    pass


def rotate(t: tuple[int, ...], shift: int, m: int) -> tuple[int, ...]:
    return tuple((x - 1 + shift) % m + 1 for x in t)


@dataclass(frozen=True)
class SummandAssignment:
    n: int
    sets: tuple[tuple[tuple[int, ...], ...], ...]  # sets[j-1] = I_j, lexicographic

    @property
    def parties(self) -> int:
        return self.n + 1

    def for_party(self, j: int) -> tuple[tuple[int, ...], ...]:
        return self.sets[j - 1]

    def validate(self) -> None:
        m = self.parties
        seen: dict[tuple[int, ...], int] = {}
        for j, tuples in enumerate(self.sets, start=1):
            for t in tuples:
                if len(t) != self.n or not all(1 <= x <= m for x in t):
                    raise AssignmentError(f"malformed index tuple {t}")
                if j in t:
                    raise AssignmentError(f"party {j} assigned {t} but lacks component {j}")
                if t in seen:
                    raise AssignmentError(f"{t} assigned to both {seen[t]} and {j}")
                seen[t] = j
        if len(seen) != m**self.n:
            raise AssignmentError(f"{len(seen)} of {m ** self.n} summands assigned")
        for t, j in seen.items():
            for shift in range(1, m):
                if seen[rotate(t, shift, m)] != (j - 1 + shift) % m + 1:
                    raise AssignmentError(f"rotation of {t} by {shift} breaks closure")


@lru_cache(maxsize=None)
def assign_summands(n: int) -> SummandAssignment:
    """Distribute the (n+1)^n summands evenly over n+1 parties.

    Base tuples fix the last index to 1. Each is given to the largest
    party index not occurring in it, then every rotation by ``l`` goes to
    party ``j + l``. For n=2 this yields exactly the groupings
    ``z_1, z_2, z_3`` of the three-party product.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 factors, got {n}")
    m = n + 1
    sets: list[list[tuple[int, ...]]] = [[] for _ in range(m)]
    for head in itertools.product(range(1, m + 1), repeat=n - 1):
        base = head + (1,)
        j = max(set(range(1, m + 1)) - set(base))
        for shift in range(m):
            sets[(j - 1 + shift) % m].append(rotate(base, shift, m))
    a = SummandAssignment(n, tuple(tuple(sorted(s)) for s in sets))
    a.validate()
    return a


def np_distribute(factors: Sequence[ScaledResidue], q: int, rng: random.Random | None = None) -> list[list[ShareView]]:
    """One (2,n+1) sharing per factor; ``bundles[j-1][k]`` is server ``j``'s view of factor ``k``."""
    if len(factors) < 2:
        raise ValueError("a product needs at least two factors")
    rng = rng or system_rng()
    m = len(factors) + 1
    bundles: list[list[ShareView]] = [[] for _ in range(m)]
    for f in factors:
        _, views = share(f, m, q, rng)
        for j, v in enumerate(views):
            bundles[j].append(v)
    return bundles


def np_server_compute(j: int, bundle: Sequence[ShareView], assignment: SummandAssignment, q: int) -> ScaledResidue:
    n = assignment.n
    if len(bundle) != n:
        raise ValueError(f"server {j} got {len(bundle)} factors, assignment is for {n}")
    for v in bundle:
        if v.owner != j or v.n != n + 1:
            raise ValueError(f"server {j} got a view for party {v.owner} of a {v.n}-sharing")
    # comps[k][i] = component i of factor k; slot j stays None
    comps = []
    for v in bundle:
        row = [None] * (n + 2)
        for idx, val in zip(v.indices, v.entries):
            row[idx] = val
        comps.append(row)
    z = 0
    tuples = assignment.for_party(j)
    for t in tuples:
        if j in t:
            raise AssignmentError(f"server {j} asked for summand {t} using its missing component")
        p = 1
        for k, idx in enumerate(t):
            p = p * comps[k][idx] % q
        z += p
    tally(muls=len(tuples) * (n - 1), adds=len(tuples))
    return ScaledResidue(z % q, sum(v.scale for v in bundle))


def np_collect(zs: Sequence[ScaledResidue | None], q: int) -> ScaledResidue:
    if len(zs) < 3 or any(z is None for z in zs):
        raise ValueError("collector is missing result components")
    scales = {z.scale for z in zs}
    if len(scales) != 1:
        raise ValueError(f"result components carry mixed scales {sorted(scales)}")
    tally(adds=len(zs) - 1)
    return ScaledResidue(sum(z.value for z in zs) % q, zs[0].scale)


def n_party_product(factors: Sequence[ScaledResidue], q: int, rng: random.Random | None = None):
    """Run distribution, all servers, and collection in-process. Returns ``(product, z, bundles)``."""
    bundles = np_distribute(factors, q, rng)
    a = assign_summands(len(factors))
    z = [np_server_compute(j, bundles[j - 1], a, q) for j in range(1, a.parties + 1)]
    return np_collect(z, q), z, bundles
