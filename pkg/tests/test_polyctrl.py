import json
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CUBIC_TERMS
from polyshare.harness import open_session
from polyshare.modring import FixedPointFormat, ScaledResidue, decode, quantize
from polyshare.polyctrl import (
    N_PARTY,
    SCHEMES,
    THREE_PARTY,
    PolynomialLaw,
    SummandError,
    drift_bound,
    dump_law,
    encode_state,
    evaluate_plaintext,
    evaluate_secure,
    load_law,
    parse_law,
    plan_evaluation,
    quantize_law,
)


def fraction_oracle(qlaw, x_r):
    """Quantized law evaluated with exact rationals."""
    xs = [quantize(v, qlaw.fmt) for v in x_r]
    return sum(t.fixed * math.prod(xs[i] ** e for i, e in enumerate(t.exponents)) for t in qlaw.terms)


def secure(qlaw, x_r, scheme, seed=0, **kw):
    plan = plan_evaluation(qlaw, scheme, **{k: v for k, v in kw.items() if k in ("share_constants", "zero_mode")})
    with open_session(plan, seed=seed, transport=kw.get("transport", "in-memory")) as s:
        return evaluate_secure(qlaw, plan, encode_state(x_r, qlaw.fmt), s)


class TestLaw:
    def test_shipped_law_matches_terms(self, shipped_law_path, cubic_law):
        lf = load_law(shipped_law_path)
        assert lf.law == cubic_law
        assert lf.fmt == FixedPointFormat(10, 2, 4, 3)

    def test_degree(self, cubic_law):
        assert cubic_law.degree == 3

    def test_roundtrip_json(self, cubic_law, cubic_fmt):
        data = json.loads(json.dumps(dump_law(cubic_law, cubic_fmt, "x")))
        lf = parse_law(data)
        assert lf.law == cubic_law and lf.fmt == cubic_fmt and lf.name == "x"

    @pytest.mark.parametrize("terms", [
        [(1.0, (1, 0)), (2.0, (1, 0))],
        [(1.0, (1,)), (2.0, (1, 0))],
        [(1.0, (0, 0))],
        [(float("nan"), (1, 0))],
    ])
    def test_invalid_laws(self, terms):
        with pytest.raises(ValueError):
            PolynomialLaw.from_terms(terms, 2)

    def test_degree_exceeding_format(self, cubic_law):
        with pytest.raises(ValueError):
            quantize_law(cubic_law, FixedPointFormat(10, 2, 4, 2))


class TestQuantizedLaw:
    def test_coefficients(self, cubic_qlaw):
        assert [float(t.fixed) for t in cubic_qlaw.terms] == [
            1.70, -12.28, -0.21, -2.70, 1.96, 0.77, -4.60, 0.30, -2.38]

    def test_lifted_to_target_scale(self, cubic_qlaw):
        for t in cubic_qlaw.terms:
            assert t.coefficient.scale + 2 * sum(t.exponents) == 8

    def test_saturation_warning(self):
        law = PolynomialLaw.from_terms([(1e12, (1,))])
        qlaw = quantize_law(law, FixedPointFormat(10, 2, 4, 1))
        assert qlaw.warnings

    def test_drift_bound_positive_and_small(self, cubic_law, cubic_fmt):
        b = drift_bound(cubic_law, cubic_fmt, 6.0)
        assert 0 < b < 100
        rng = random.Random(0)
        qlaw = quantize_law(cubic_law, cubic_fmt)
        for _ in range(200):
            x = [rng.uniform(-6, 6) for _ in range(2)]
            assert abs(float(fraction_oracle(qlaw, x)) - cubic_law(x)) <= b


class TestPlan:
    def test_pools(self, cubic_qlaw, demo_law):
        assert plan_evaluation(cubic_qlaw, N_PARTY).pool_size == 5
        assert plan_evaluation(cubic_qlaw, THREE_PARTY).pool_size == 3
        demo = quantize_law(demo_law.law, demo_law.fmt)
        assert plan_evaluation(demo, N_PARTY).pool_size == 4

    def test_servers_per_instance(self, cubic_qlaw):
        plan = plan_evaluation(cubic_qlaw, N_PARTY)
        for inst in plan.instances:
            assert inst.servers == tuple(range(1, len(inst.factors) + 2))
            assert inst.factors[0] == -1

    def test_circular_rounds(self, cubic_qlaw):
        # 2 linear, 3 quadratic, 4 cubic terms
        assert plan_evaluation(cubic_qlaw, THREE_PARTY).circular_rounds() == 3 * 1 + 4 * 2
        assert plan_evaluation(cubic_qlaw, N_PARTY).circular_rounds() == 0

    def test_unknown_scheme(self, cubic_qlaw):
        with pytest.raises(ValueError):
            plan_evaluation(cubic_qlaw, "two-party")

    def test_constant_goes_to_widest_instance(self, demo_law):
        demo = quantize_law(demo_law.law, demo_law.fmt)
        plan = plan_evaluation(demo, N_PARTY, share_constants=True)
        carriers = [i for i in plan.instances if i.carries_constant]
        assert len(carriers) == 1 and len(carriers[0].servers) == 4


class TestEvaluate:
    def test_unit_state(self, cubic_qlaw):
        for scheme in SCHEMES:
            assert decode(secure(cubic_qlaw, (1, 1), scheme), cubic_qlaw.fmt) == Fraction("-17.44")

    @pytest.mark.parametrize("scheme", SCHEMES)
    @pytest.mark.parametrize("share_constants", [False, True])
    def test_demo_law(self, demo_law, scheme, share_constants):
        demo = quantize_law(demo_law.law, demo_law.fmt)
        u = secure(demo, (1, 2), scheme, share_constants=share_constants)
        assert decode(u, demo.fmt) == Fraction("-0.25")
        zero = secure(demo, (0, 0), scheme, share_constants=share_constants)
        assert decode(zero, demo.fmt) == Fraction("0.25")

    def test_zero_state_without_constant(self, cubic_qlaw):
        for scheme in SCHEMES:
            assert secure(cubic_qlaw, (0, 0), scheme).value == 0

    @pytest.mark.parametrize("zero_mode", ["communication", "correlated-randomness"])
    @pytest.mark.parametrize("transport", ["in-memory", "framed-stream"])
    def test_all_configurations_agree(self, cubic_qlaw, zero_mode, transport):
        x = (-2.5, 3.75)
        ref = evaluate_plaintext(cubic_qlaw, encode_state(x, cubic_qlaw.fmt))
        for scheme in SCHEMES:
            assert secure(cubic_qlaw, x, scheme, zero_mode=zero_mode, transport=transport) == ref

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-6, 6), st.floats(-6, 6), st.integers(0, 1000))
    def test_plaintext_matches_fraction_oracle(self, x1, x2, seed):
        qlaw = quantize_law(PolynomialLaw.from_terms(CUBIC_TERMS), FixedPointFormat(10, 2, 4, 3))
        u = evaluate_plaintext(qlaw, encode_state((x1, x2), qlaw.fmt))
        assert decode(u, qlaw.fmt) == fraction_oracle(qlaw, (x1, x2))
        assert secure(qlaw, (x1, x2), THREE_PARTY, seed=seed) == u

    def test_state_validation(self, cubic_qlaw):
        plan = plan_evaluation(cubic_qlaw, N_PARTY)
        with open_session(plan, seed=0) as s:
            with pytest.raises(ValueError):
                evaluate_secure(cubic_qlaw, plan, [ScaledResidue(1, 0), ScaledResidue(1, 0)], s)

    def test_fault_is_attributed_or_detected(self, cubic_qlaw):
        plan = plan_evaluation(cubic_qlaw, N_PARTY)
        x = encode_state((1, 1), cubic_qlaw.fmt)
        with open_session(plan, seed=0, inject_fault=True) as s:
            try:
                u = evaluate_secure(cubic_qlaw, plan, x, s)
            except SummandError:
                return
        assert u != evaluate_plaintext(cubic_qlaw, x)
