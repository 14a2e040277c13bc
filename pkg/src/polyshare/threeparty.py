"""Secure n-factor product over three servers.

Two (2,3)-shared factors can be multiplied locally: server ``j`` holds
components ``j+1`` and ``j-1`` of both factors, which is enough to compute
its summand group ``z_j`` of the expanded product. For more factors the
partial product is re-randomized with a zero-sharing and passed once
around the ring, which restores a (2,3) sharing of the running product.

Server state is kept as ``(y1, y2) = (w_{j+1}, w_{j-1})``, the two
components of the running product's sharing that server ``j`` holds.
After a re-sharing round, server ``j`` owns ``z~_j`` and receives
``z~_{j-1}`` from its predecessor. With ``w_m = z~_{m+1}`` this means the
received value becomes ``y1`` and the own value ``y2``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from polyshare.modring import ScaledResidue, tally
from polyshare.sharing import (
    CounterGuard,
    ShareView,
    ZeroSharingMode,
    communication_component,
    CorrelatedZeroSharer,
    new_key,
    pred,
    share,
    succ,
    system_rng,
)

PARTIES = 3


class ProtocolError(RuntimeError):
    """A party received an out-of-order or misaddressed protocol step."""


def tp_distribute(factors: Sequence[ScaledResidue], q: int, rng: random.Random | None = None) -> list[list[ShareView]]:
    """Share every factor with a fresh (2,3) sharing.

    Returns one bundle per server; ``bundles[j-1][k]`` is server ``j``'s
    view of factor ``k``.
    """
    if len(factors) < 2:
        raise ValueError("a product needs at least two factors")
    rng = rng or system_rng()
    bundles: list[list[ShareView]] = [[] for _ in range(PARTIES)]
    for f in factors:
        _, views = share(f, PARTIES, q, rng)
        for j, v in enumerate(views):
            bundles[j].append(v)
    return bundles


@dataclass
class ThreePartyServerState:
    j: int
    factors: list[ShareView]
    q: int
    y1: int = 0
    y2: int = 0
    scale: int = 0
    folded: int = 1  # factors absorbed into (y1, y2) so far
    awaiting: bool = False
    guard: CounterGuard = field(default_factory=CounterGuard)

    def __post_init__(self):
        if len(self.factors) < 2:
            raise ValueError("a product needs at least two factors")
        for v in self.factors:
            if v.owner != self.j or v.n != PARTIES:
                raise ValueError(f"view of party {v.owner}/{v.n} given to server {self.j}")
        first = self.factors[0]
        self.y1 = first.component(succ(self.j, PARTIES))
        self.y2 = first.component(pred(self.j, PARTIES))
        self.scale = first.scale

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def rounds(self) -> int:
        return self.n_factors - 2

    def _fold_next(self) -> int:
        v = self.factors[self.folded]
        v_next = v.component(succ(self.j, PARTIES))
        v_prev = v.component(pred(self.j, PARTIES))
        tally(muls=3, adds=2)
        return (self.y1 * v_next + self.y1 * v_prev + self.y2 * v_next) % self.q


def tp_local_round(state: ThreePartyServerState, a_j: int, counter: Sequence[int]) -> int:
    """Multiply in the next factor, mask with ``a_j`` and return the value for the successor."""
    if state.awaiting:
        raise ProtocolError(f"server {state.j} has not received its predecessor's value yet")
    if state.folded >= state.n_factors - 1:
        raise ProtocolError(f"server {state.j}: no communication round left, call tp_final_round")
    state.guard.claim(counter)
    z = state._fold_next()
    tally(adds=1)
    z_tilde = (z + a_j) % state.q
    state.scale += state.factors[state.folded].scale
    state.folded += 1
    state.y2 = z_tilde
    state.awaiting = True
    return z_tilde


def tp_receive(state: ThreePartyServerState, sender: int, value: int) -> None:
    expected = pred(state.j, PARTIES)
    if sender != expected:
        raise ProtocolError(f"server {state.j} expects round values from {expected}, got {sender}")
    if not state.awaiting:
        raise ProtocolError(f"server {state.j} received an unexpected round value")
    if not 0 <= value < state.q:
        raise ProtocolError(f"value {value} not reduced modulo {state.q}")
    state.y1 = value
    state.awaiting = False


def tp_final_round(state: ThreePartyServerState) -> ScaledResidue:
    if state.awaiting or state.folded != state.n_factors - 1:
        raise ProtocolError(f"server {state.j} is not ready for the final round")
    z = state._fold_next()
    state.folded += 1
    return ScaledResidue(z, state.scale + state.factors[-1].scale)


def tp_collect(zs: Sequence[ScaledResidue | None], q: int) -> ScaledResidue:
    if len(zs) != PARTIES or any(z is None for z in zs):
        raise ValueError("collector needs all three result components")
    scales = {z.scale for z in zs}
    if len(scales) != 1:
        raise ValueError(f"result components carry mixed scales {sorted(scales)}")
    tally(adds=PARTIES - 1)
    return ScaledResidue(sum(z.value for z in zs) % q, zs[0].scale)


@dataclass
class ThreePartyRun:
    product: ScaledResidue
    z: list[ScaledResidue]
    # per server: its factor entries, then for each round the received (rho, z~) pair
    views: list[tuple[int, ...]]
    messages: int


def three_party_product(factors: Sequence[ScaledResidue], q: int, rng: random.Random | None = None,
                        mode: ZeroSharingMode | str = ZeroSharingMode.COMMUNICATION,
                        server_rngs: Sequence[random.Random] | None = None) -> ThreePartyRun:
    """Run the whole protocol in-process, recording what each server sees."""
    rng = rng or system_rng()
    mode = ZeroSharingMode(mode)
    server_rngs = list(server_rngs) if server_rngs is not None else [rng] * PARTIES
    bundles = tp_distribute(factors, q, rng)
    states = [ThreePartyServerState(j + 1, bundles[j], q) for j in range(PARTIES)]
    views = [[e for v in bundles[j] for e in v.entries] for j in range(PARTIES)]
    if mode is ZeroSharingMode.CORRELATED:
        keys = [new_key(r) for r in server_rngs]
        sharers = [CorrelatedZeroSharer(keys[j], keys[(j + 1) % PARTIES], q) for j in range(PARTIES)]
    messages = 0
    for rnd in range(1, len(factors) - 1):
        counter = (0, 0, 0, rnd)
        if mode is ZeroSharingMode.COMMUNICATION:
            rho = [server_rngs[j].randrange(q) for j in range(PARTIES)]
            a = [communication_component(rho[j], rho[j - 1], q) for j in range(PARTIES)]
            for j in range(PARTIES):
                views[j].append(rho[j - 1])
            messages += PARTIES
        else:
            a = [sharers[j].component(counter) for j in range(PARTIES)]
        out = [tp_local_round(states[j], a[j], counter) for j in range(PARTIES)]
        for j in range(PARTIES):
            sender = pred(j + 1, PARTIES)
            tp_receive(states[j], sender, out[sender - 1])
            views[j].append(out[sender - 1])
        messages += PARTIES
    z = [tp_final_round(s) for s in states]
    return ThreePartyRun(tp_collect(z, q), z, [tuple(v) for v in views], messages)
