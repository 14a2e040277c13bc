"""Protocol sessions: parties, message routing, per-party randomness and counters."""

from __future__ import annotations

import contextlib
import hashlib
import random
from collections import Counter
from dataclasses import dataclass, field

from polyshare.harness.transport import make_transport
from polyshare.harness.wire import COLLECTOR, DISTRIBUTOR, Message, frame_size, role_of
from polyshare.modring import OpCounts, counting
from polyshare.sharing import CorrelatedZeroSharer, ZeroSharingMode, new_key

ROLES = ("distributor", "server", "collector")


class SessionError(RuntimeError):
    pass


class MalformedMessageError(SessionError):
    pass


@dataclass(frozen=True)
class PartyId:
    role: str
    index: int

    @property
    def byte(self) -> int:
        if self.role == "distributor":
            return DISTRIBUTOR
        if self.role == "collector":
            return COLLECTOR
        return self.index


@dataclass
class RoleMetrics:
    adds: int = 0
    muls: int = 0
    draws: int = 0
    messages: int = 0
    bytes: int = 0

    def absorb(self, other: "RoleMetrics") -> None:
        self.adds += other.adds
        self.muls += other.muls
        self.draws += other.draws
        self.messages += other.messages
        self.bytes += other.bytes


@dataclass(frozen=True)
class LogEntry:
    step: int
    summand: int
    round: int
    sender: int
    receiver: int
    kind: str
    nbytes: int


@dataclass
class RunMetrics:
    parties: dict[int, RoleMetrics] = field(default_factory=dict)
    kinds: Counter = field(default_factory=Counter)
    steps: int = 0

    def party(self, p: int) -> RoleMetrics:
        return self.parties.setdefault(p, RoleMetrics())

    def by_role(self) -> dict[str, RoleMetrics]:
        out = {r: RoleMetrics() for r in ROLES}
        for p, m in self.parties.items():
            out[role_of(p)].absorb(m)
        return out

    def rows(self) -> list[dict[str, int | str]]:
        """One report row per role plus a total row."""
        rows = []
        total = RoleMetrics()
        for role, m in self.by_role().items():
            rows.append({"role": role, **vars(m)})
            total.absorb(m)
        rows.append({"role": "total", **vars(total)})
        return rows


class Session:
    """A simulated network of one distributor, a server pool and one collector.

    Parties act one at a time (``with session.acting(p): ...``); every
    modular operation inside the block is charged to party ``p``.
    """

    def __init__(self, pool_size: int, q: int, transport: str = "in-memory", seed: int | None = None,
                 zero_mode: ZeroSharingMode | str = ZeroSharingMode.COMMUNICATION, audit: bool = False,
                 inject_fault: bool = False):
        if not 1 <= pool_size <= 254:
            raise SessionError(f"server pool of {pool_size} not supported")
        self.pool_size = pool_size
        self.q = q
        self.seed = seed
        self.zero_mode = ZeroSharingMode(zero_mode)
        if seed is None:
            self.session_id = random.SystemRandom().getrandbits(64)
            master = None
        else:
            digest = hashlib.sha256(f"polyshare-session:{seed}".encode()).digest()
            self.session_id = int.from_bytes(digest[:8], "big")
            master = digest
        self.transport = make_transport(transport, master)
        self.parties = [PartyId("distributor", 0)] + [PartyId("server", j) for j in range(1, pool_size + 1)] \
            + [PartyId("collector", 0)]
        self._rngs = {p.byte: self._derive_rng(p.byte) for p in self.parties}
        self.metrics = RunMetrics()
        self._ops = {p.byte: OpCounts() for p in self.parties}
        self.log: list[LogEntry] = []
        self._keys: set[tuple[int, ...]] = set()
        self.audit = audit
        self.views: dict[int, list[Message]] = {p.byte: [] for p in self.parties}
        self.inject_fault = inject_fault
        self._fault_done = False
        self.step = 0
        self.closed = False
        self._sharers: dict[int, CorrelatedZeroSharer] = {}
        if self.zero_mode is ZeroSharingMode.CORRELATED:
            self._setup_correlated_keys()

    def _derive_rng(self, party: int) -> random.Random:
        if self.seed is None:
            return random.SystemRandom()
        return random.Random(f"polyshare:{self.seed}:{party}")

    def _setup_correlated_keys(self) -> None:
        # each server draws k_j; k_{j+1} is handed to server j at setup time
        n = self.pool_size
        keys = {}
        for j in range(1, n + 1):
            with self.acting(j):
                keys[j] = new_key(self.rng(j))
        for j in range(1, n + 1):
            self._sharers[j] = CorrelatedZeroSharer(keys[j], keys[j % n + 1], self.q)

    def rng(self, party: int) -> random.Random:
        return self._rngs[party]

    def zero_sharer(self, j: int) -> CorrelatedZeroSharer:
        return self._sharers[j]

    @contextlib.contextmanager
    def acting(self, party: int):
        with counting(self._ops[party]):
            yield

    def next_step(self) -> int:
        self.step += 1
        self.metrics.steps = self.step
        return self.step

    def send(self, msg: Message) -> None:
        if self.closed:
            raise SessionError("session closed")
        if msg.session != self.session_id:
            raise MalformedMessageError(f"message for session {msg.session} in session {self.session_id}")
        for v, s in msg.payload:
            if not 0 <= v < self.q or not 0 <= s < 256:
                raise MalformedMessageError(f"payload entry ({v}, {s}) outside Z_{self.q}")
        if msg.key in self._keys:
            raise MalformedMessageError(f"duplicate message {msg.key}")
        self._keys.add(msg.key)
        if self.inject_fault and not self._fault_done and msg.sender == DISTRIBUTOR and msg.payload:
            (v, s), rest = msg.payload[0], msg.payload[1:]
            msg = Message(msg.session, msg.step, msg.summand, msg.round, msg.sender, msg.receiver,
                          (((v + 1) % self.q, s),) + rest)
            self._fault_done = True
        nbytes = frame_size(msg)
        m = self.metrics.party(msg.sender)
        m.messages += 1
        m.bytes += nbytes
        self.metrics.kinds[msg.kind] += 1
        self.log.append(LogEntry(msg.step, msg.summand, msg.round, msg.sender, msg.receiver, msg.kind, nbytes))
        self.transport.send(msg)

    def deliver(self, receiver: int) -> list[Message]:
        if self.closed:
            raise SessionError("session closed")
        msgs = self.transport.receive(receiver)
        for msg in msgs:
            if msg.receiver != receiver:
                raise MalformedMessageError(f"message for {msg.receiver} delivered to {receiver}")
            for v, _ in msg.payload:
                if not 0 <= v < self.q:
                    raise MalformedMessageError(f"received residue {v} outside Z_{self.q}")
        if self.audit:
            self.views[receiver].extend(msgs)
        return msgs

    def message(self, summand: int, rnd: int, sender: int, receiver: int, payload=()) -> Message:
        return Message(self.session_id, self.step, summand, rnd, sender, receiver, tuple(payload))

    def ping(self) -> list[int]:
        """Round-trip an empty frame between the distributor and every other party."""
        echoed = []
        for p in self.parties[1:]:
            self.send(Message(self.session_id, 0xFFFFFFFF, 0xFFFF, 0, DISTRIBUTOR, p.byte))
            for m in self.deliver(p.byte):
                self.send(Message(self.session_id, 0xFFFFFFFF, 0xFFFF, 0, p.byte, DISTRIBUTOR))
            for m in self.deliver(DISTRIBUTOR):
                echoed.append(m.sender)
        return echoed

    def close(self) -> None:
        if not self.closed:
            self.transport.close()
            self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def collect_metrics(session: Session) -> RunMetrics:
    """Snapshot of message and operation counters, merged per party."""
    out = RunMetrics(kinds=Counter(session.metrics.kinds), steps=session.metrics.steps)
    for p in session._ops:
        m = out.party(p)
        src = session.metrics.parties.get(p, RoleMetrics())
        m.messages, m.bytes = src.messages, src.bytes
        ops = session._ops[p]
        m.adds, m.muls, m.draws = ops.adds, ops.muls, ops.draws
    return out


def open_session(plan, transport: str = "in-memory", seed: int | None = None, **kw) -> Session:
    """Open a session sized for ``plan`` (any object with ``pool_size``, ``q`` and ``zero_mode``)."""
    return Session(plan.pool_size, plan.q, transport=transport, seed=seed,
                   zero_mode=kw.pop("zero_mode", plan.zero_mode), **kw)
