"""Polynomial control laws evaluated summand by summand on secret shares.

A law ``u = sum_i a_i * prod_k x_k^{e_ik}`` is quantized offline. Each
coefficient is encoded and pre-multiplied by ``beta^((d-k)*x_post)`` where
``k`` is the number of state factors in its term, so every summand's
product lands on the common scale ``(d+1)*x_post`` and the collector can
add the results directly.

Online, every non-constant term runs one secure product (three-party or
n-party) over the factors ``[coefficient, x_i, x_i, ..., x_j]``. Each
distinct secret within a summand is shared once; repeated state factors
reuse that sharing.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from polyshare import nparty, threeparty
from polyshare.harness.session import Session
from polyshare.harness.wire import COLLECTOR, DISTRIBUTOR, ZERO_FLAG
from polyshare.modring import (
    FixedPointFormat,
    ScaledResidue,
    encode,
    mod_add,
    mod_mul,
    quantize,
    rescale,
    tally,
)
from polyshare.sharing import ShareView, ZeroSharingMode, communication_component, pred, share, succ

log = logging.getLogger(__name__)

THREE_PARTY = "three-party"
N_PARTY = "n-party"
SCHEMES = (THREE_PARTY, N_PARTY)


class SummandError(RuntimeError):
    def __init__(self, summand: int, cause: Exception):
        super().__init__(f"summand {summand}: {cause}")
        self.summand = summand
        self.cause = cause


@dataclass(frozen=True)
class PolynomialLaw:
    terms: tuple[tuple[float, tuple[int, ...]], ...]
    n_x: int

    def __post_init__(self):
        seen = set()
        for coef, exps in self.terms:
            if len(exps) != self.n_x or any(e < 0 for e in exps):
                raise ValueError(f"exponent vector {exps} does not fit {self.n_x} states")
            if exps in seen:
                raise ValueError(f"duplicate monomial {exps}")
            if not math.isfinite(coef):
                raise ValueError(f"non-finite coefficient {coef}")
            seen.add(exps)
        if self.degree < 1:
            raise ValueError("a control law needs degree >= 1")

    @property
    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)

    def __call__(self, x: Sequence[float]) -> float:
        return sum(c * math.prod(xi**e for xi, e in zip(x, exps)) for c, exps in self.terms)

    @classmethod
    def from_terms(cls, terms, n_x: int | None = None) -> "PolynomialLaw":
        terms = tuple((float(c), tuple(int(e) for e in exps)) for c, exps in terms)
        return cls(terms, n_x if n_x is not None else len(terms[0][1]))


@dataclass(frozen=True)
class LawFile:
    law: PolynomialLaw
    fmt: FixedPointFormat
    name: str = ""


def load_law(path: str | Path) -> LawFile:
    """Read a JSON law file.

    Schema::

        {"name": "...",
         "format": {"beta": 10, "x_post": 2, "u_pre": 4},
         "states": 2,
         "terms": [{"coefficient": 1.6973, "exponents": [1, 0]}, ...]}

    ``format.degree`` may be given; it defaults to the law's degree.
    """
    data = json.loads(Path(path).read_text())
    return parse_law(data)


def parse_law(data: dict) -> LawFile:
    terms = [(t["coefficient"], t["exponents"]) for t in data["terms"]]
    law = PolynomialLaw.from_terms(terms, data.get("states"))
    f = data.get("format", {})
    fmt = FixedPointFormat(beta=f.get("beta", 10), x_post=f.get("x_post", 2), u_pre=f.get("u_pre", 4),
                           degree_d=f.get("degree", law.degree))
    return LawFile(law, fmt, data.get("name", ""))


def dump_law(law: PolynomialLaw, fmt: FixedPointFormat, name: str = "") -> dict:
    return {
        "name": name,
        "format": {"beta": fmt.beta, "x_post": fmt.x_post, "u_pre": fmt.u_pre, "degree": fmt.degree_d},
        "states": law.n_x,
        "terms": [{"coefficient": c, "exponents": list(e)} for c, e in law.terms],
    }


# -- quantization ---------------------------------------------------------------------

@dataclass(frozen=True)
class QuantizedTerm:
    coefficient: ScaledResidue  # already lifted so the full product reaches the target scale
    exponents: tuple[int, ...]
    fixed: Fraction  # quantized real coefficient

    @property
    def state_factors(self) -> tuple[int, ...]:
        """State indices, repeated by exponent, in ascending order."""
        return tuple(i for i, e in enumerate(self.exponents) for _ in range(e))

    @property
    def n_factors(self) -> int:
        return 1 + sum(self.exponents)


@dataclass(frozen=True)
class QuantizedLaw:
    terms: tuple[QuantizedTerm, ...]
    fmt: FixedPointFormat
    n_x: int
    warnings: tuple[str, ...] = ()

    @property
    def target_scale(self) -> int:
        return self.fmt.target_scale

    @property
    def degree(self) -> int:
        return max(t.n_factors for t in self.terms) - 1


def quantize_law(law: PolynomialLaw, fmt: FixedPointFormat) -> QuantizedLaw:
    if law.degree > fmt.degree_d:
        raise ValueError(f"law degree {law.degree} exceeds format degree {fmt.degree_d}")
    warnings = []
    terms = []
    for coef, exps in law.terms:
        fixed = quantize(coef, fmt)
        if abs(Fraction(coef)) >= fmt.q_sat - fmt.delta:
            msg = f"coefficient {coef} of monomial {exps} saturates to {fixed}"
            log.warning(msg)
            warnings.append(msg)
        k = sum(exps)
        enc = encode(fixed, fmt)
        lifted = rescale(enc, fmt.target_scale - k * fmt.x_post, fmt)
        terms.append(QuantizedTerm(lifted, exps, fixed))
    return QuantizedLaw(tuple(terms), fmt, law.n_x, tuple(warnings))


def encode_state(x_r: Sequence[float], fmt: FixedPointFormat) -> list[ScaledResidue]:
    """Quantize and encode a measured state at scale ``x_post``."""
    return [encode(quantize(x, fmt), fmt) for x in x_r]


def drift_bound(law: PolynomialLaw, fmt: FixedPointFormat, box: float) -> float:
    """Worst-case |quantized law - real law| for states with |x_i| <= box.

    Coefficients and states each move by at most delta/2 under rounding,
    so a term ``c * prod(x)`` with ``k`` factors moves by at most
    ``(|c| + h)(B + h)^k - |c| B^k`` with ``h = delta/2``.
    """
    h = float(fmt.delta) / 2
    total = 0.0
    for c, exps in law.terms:
        k = sum(exps)
        total += (abs(c) + h) * (box + h) ** k - abs(c) * box**k
    return total


# -- plans ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SummandPlan:
    summand: int
    term: int
    factors: tuple[int, ...]  # -1 is the coefficient, i >= 0 is state x_i
    servers: tuple[int, ...]
    carries_constant: bool = False

    @property
    def secrets(self) -> tuple[int, ...]:
        """Distinct secrets in first-use order; each is shared once."""
        return tuple(dict.fromkeys(self.factors))


@dataclass(frozen=True)
class EvaluationPlan:
    scheme: str
    fmt: FixedPointFormat
    pool_size: int
    instances: tuple[SummandPlan, ...]
    constant_terms: tuple[int, ...]
    share_constants: bool = False
    zero_mode: ZeroSharingMode = ZeroSharingMode.COMMUNICATION

    @property
    def q(self) -> int:
        return self.fmt.Q

    def circular_rounds(self) -> int:
        """Re-sharing rounds per evaluation (three-party only)."""
        if self.scheme != THREE_PARTY:
            return 0
        return sum(len(i.factors) - 2 for i in self.instances)


def plan_evaluation(qlaw: QuantizedLaw, scheme: str, share_constants: bool = False,
                    zero_mode: ZeroSharingMode | str = ZeroSharingMode.COMMUNICATION) -> EvaluationPlan:
    """Assign every non-constant term to a protocol instance and servers.

    Three-party: servers 1-3 for every summand. n-party: a summand with
    ``f`` factors runs on servers ``1..f+1`` of one shared pool, so the
    pool has ``d+2`` servers for a law of degree ``d``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    instances = []
    constants = []
    for idx, t in enumerate(qlaw.terms):
        if not t.state_factors:
            constants.append(idx)
            continue
        factors = (-1,) + t.state_factors
        servers = (1, 2, 3) if scheme == THREE_PARTY else tuple(range(1, len(factors) + 2))
        instances.append(SummandPlan(len(instances), idx, factors, servers))
    if share_constants and constants:
        widest = max(range(len(instances)), key=lambda i: (len(instances[i].servers), -i))
        p = instances[widest]
        instances[widest] = SummandPlan(p.summand, p.term, p.factors, p.servers, carries_constant=True)
    pool = max((max(i.servers) for i in instances), default=0)
    return EvaluationPlan(scheme, qlaw.fmt, pool, tuple(instances), tuple(constants),
                          share_constants and bool(constants), ZeroSharingMode(zero_mode))


# -- evaluation -----------------------------------------------------------------------

def _constant_sum(qlaw: QuantizedLaw, plan: EvaluationPlan) -> ScaledResidue:
    acc = ScaledResidue(0, qlaw.target_scale)
    for idx in plan.constant_terms:
        acc = mod_add(acc, qlaw.terms[idx].coefficient, qlaw.fmt.Q)
    return acc


def evaluate_plaintext(qlaw: QuantizedLaw, state: Sequence[ScaledResidue]) -> ScaledResidue:
    """Same quantized arithmetic as the secure path, without any sharing."""
    q = qlaw.fmt.Q
    acc = ScaledResidue(0, qlaw.target_scale)
    for t in qlaw.terms:
        v = t.coefficient
        for i in t.state_factors:
            v = mod_mul(v, state[i], q)
        acc = mod_add(acc, v, q)
    return acc


def _views_from_payload(payload, j: int, parties: int, q: int, count: int) -> list[ShareView]:
    width = parties - 1
    views = []
    for s in range(count):
        chunk = payload[s * width:(s + 1) * width]
        scales = {sc for _, sc in chunk}
        if len(chunk) != width or len(scales) != 1:
            raise ValueError(f"server {j}: malformed share bundle")
        views.append(ShareView(j, tuple(v for v, _ in chunk), scales.pop(), q))
    return views


def _distribute(session: Session, qlaw: QuantizedLaw, inst: SummandPlan, state, const: ScaledResidue | None):
    q = qlaw.fmt.Q
    parties = len(inst.servers)
    rng = session.rng(DISTRIBUTOR)
    with session.acting(DISTRIBUTOR):
        payloads: list[list[tuple[int, int]]] = [[] for _ in range(parties)]
        for secret in inst.secrets:
            value = qlaw.terms[inst.term].coefficient if secret < 0 else state[secret]
            _, views = share(value, parties, q, rng)
            for j, v in enumerate(views):
                payloads[j].extend((e, v.scale) for e in v.entries)
        if const is not None:
            pieces = [rng.randrange(q) for _ in range(parties - 1)]
            pieces.append((const.value - sum(pieces)) % q)
            tally(draws=parties - 1, adds=parties - 1)
            for j in range(parties):
                payloads[j].append((pieces[j], const.scale))
    for j, server in enumerate(inst.servers):
        session.send(session.message(inst.summand, 0, DISTRIBUTOR, server, payloads[j]))


def _receive_bundle(session: Session, inst: SummandPlan, server: int, q: int):
    msgs = [m for m in session.deliver(server) if m.summand == inst.summand]
    if len(msgs) != 1:
        raise ValueError(f"server {server} expected one share bundle, got {len(msgs)}")
    payload = msgs[0].payload
    parties = len(inst.servers)
    n_secrets = len(inst.secrets)
    views = _views_from_payload(payload, server, parties, q, n_secrets)
    piece = None
    if inst.carries_constant:
        if len(payload) != n_secrets * (parties - 1) + 1:
            raise ValueError(f"server {server}: constant piece missing")
        piece = payload[-1]
    by_secret = dict(zip(inst.secrets, views))
    return [by_secret[f] for f in inst.factors], piece


def _send_result(session: Session, inst: SummandPlan, server: int, z: ScaledResidue, piece, q: int) -> None:
    if piece is not None:
        with session.acting(server):
            z = mod_add(z, ScaledResidue(*piece), q)
    session.send(session.message(inst.summand, len(inst.factors) - 1, server, COLLECTOR, [(z.value, z.scale)]))


def _run_three_party(session: Session, inst: SummandPlan, q: int) -> None:
    states = {}
    pieces = {}
    for j in inst.servers:
        factors, pieces[j] = _receive_bundle(session, inst, j, q)
        states[j] = threeparty.ThreePartyServerState(j, factors, q)
    for rnd in range(1, len(inst.factors) - 1):
        counter = (session.session_id, session.step, inst.summand, rnd)
        a = {}
        if session.zero_mode is ZeroSharingMode.COMMUNICATION:
            rho = {}
            for j in inst.servers:
                with session.acting(j):
                    rho[j] = session.rng(j).randrange(q)
                    tally(draws=1)
                session.send(session.message(inst.summand, rnd | ZERO_FLAG, j, succ(j, 3), [(rho[j], 0)]))
            for j in inst.servers:
                (msg,) = session.deliver(j)
                if msg.sender != pred(j, 3) or msg.round != rnd | ZERO_FLAG:
                    raise threeparty.ProtocolError(f"server {j}: unexpected zero-sharing frame")
                with session.acting(j):
                    a[j] = communication_component(rho[j], msg.payload[0][0], q)
        else:
            for j in inst.servers:
                with session.acting(j):
                    a[j] = session.zero_sharer(j).component(counter)
        for j in inst.servers:
            with session.acting(j):
                out = threeparty.tp_local_round(states[j], a[j], counter)
            session.send(session.message(inst.summand, rnd, j, succ(j, 3), [(out, 0)]))
        for j in inst.servers:
            (msg,) = session.deliver(j)
            if msg.round != rnd:
                raise threeparty.ProtocolError(f"server {j}: frame for round {msg.round} during round {rnd}")
            threeparty.tp_receive(states[j], msg.sender, msg.payload[0][0])
    for j in inst.servers:
        with session.acting(j):
            z = threeparty.tp_final_round(states[j])
        _send_result(session, inst, j, z, pieces[j], q)


def _run_n_party(session: Session, inst: SummandPlan, q: int) -> None:
    assignment = nparty.assign_summands(len(inst.factors))
    for j in inst.servers:
        factors, piece = _receive_bundle(session, inst, j, q)
        with session.acting(j):
            z = nparty.np_server_compute(j, factors, assignment, q)
        _send_result(session, inst, j, z, piece, q)


def evaluate_secure(qlaw: QuantizedLaw, plan: EvaluationPlan, state: Sequence[ScaledResidue],
                    session: Session) -> ScaledResidue:
    """One control step: share, run every summand protocol, and collect ``u``."""
    q = qlaw.fmt.Q
    if session.q != q or session.pool_size < plan.pool_size:
        raise ValueError("session does not match the evaluation plan")
    if len(state) != qlaw.n_x or any(s.scale != qlaw.fmt.x_post for s in state):
        raise ValueError(f"state must be {qlaw.n_x} residues at scale {qlaw.fmt.x_post}")
    session.next_step()
    const = _constant_sum(qlaw, plan) if plan.constant_terms else None
    run = _run_three_party if plan.scheme == THREE_PARTY else _run_n_party
    for inst in plan.instances:
        try:
            _distribute(session, qlaw, inst, state, const if inst.carries_constant else None)
            run(session, inst, q)
        except Exception as exc:
            raise SummandError(inst.summand, exc) from exc

    results: dict[int, list[ScaledResidue]] = {}
    for msg in session.deliver(COLLECTOR):
        (value, scale), = msg.payload
        results.setdefault(msg.summand, []).append(ScaledResidue(value, scale))
    with session.acting(COLLECTOR):
        u = ScaledResidue(0, qlaw.target_scale)
        for inst in plan.instances:
            zs = results.get(inst.summand, [])
            if len(zs) != len(inst.servers):
                raise SummandError(inst.summand, ValueError(f"collector got {len(zs)} of {len(inst.servers)} results"))
            if plan.scheme == THREE_PARTY:
                u = mod_add(u, threeparty.tp_collect(zs, q), q)
            else:
                u = mod_add(u, nparty.np_collect(zs, q), q)
        if const is not None and not plan.share_constants:
            u = mod_add(u, const, q)
    return u
