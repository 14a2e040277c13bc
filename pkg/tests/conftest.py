import contextlib
import functools
import itertools
from importlib import resources

import numpy as np
import pytest

from polyshare.modring import FixedPointFormat
from polyshare.polyctrl import PolynomialLaw, load_law, quantize_law

# coefficients of the cubic stabilizing law shipped in laws/cubic_plant.json
CUBIC_TERMS = [
    (1.6973, (1, 0)), (-12.2838, (0, 1)), (-0.2122, (2, 0)), (-2.6975, (1, 1)), (1.9631, (0, 2)),
    (0.7721, (3, 0)), (-4.6034, (2, 1)), (0.2959, (1, 2)), (-2.3850, (0, 3)),
]


class ScriptedRandom:
    """Feeds fixed values to ``randrange`` in order."""

    def __init__(self, values):
        self._it = iter(values)

    def randrange(self, q):
        v = next(self._it)
        assert 0 <= v < q
        return v


@functools.lru_cache(maxsize=8)
def _grid_axes(q, draws, dtype):
    grids = np.meshgrid(*[np.arange(q, dtype=dtype)] * draws, indexing="ij")
    axes = [g.ravel() for g in grids]
    for a in axes:
        a.flags.writeable = False
    return axes


class GridRandom:
    """Every call to ``randrange`` returns one axis of the full grid Z_q^draws.

    Running the protocol code once with this object evaluates it for every
    possible randomness assignment at the same time (numpy broadcasting).
    """

    def __init__(self, q, draws, dtype=np.int64):
        self._axes = iter(_grid_axes(q, draws, np.dtype(dtype).str))
        self.size = q**draws

    def randrange(self, q):
        return next(self._axes)


def view_histogram(entries, q):
    """Histogram of view tuples, each column of ``entries`` being one randomness assignment."""
    code = np.zeros_like(np.asarray(entries[0]))
    for e in entries:
        code = code * q + (np.asarray(e) % q)
    values, counts = np.unique(code, return_counts=True)
    return dict(zip(values.tolist(), counts.tolist()))


def all_tuples(q, k):
    return list(itertools.product(range(q), repeat=k))


def cubic_closed_forms():
    """Per-step counts derived from the term structure of the cubic law."""
    terms = [exps for _, exps in CUBIC_TERMS]
    f = [1 + sum(e) for e in terms]  # factors per summand, coefficient included
    s = [1 + sum(1 for x in e if x) for e in terms]  # distinct shared secrets
    frame = lambda entries: 24 + 9 * entries  # noqa: E731
    rounds = sum(fi - 2 for fi in f)
    tp = {
        "distributor": dict(adds=2 * sum(s), draws=2 * sum(s), messages=3 * len(f),
                            bytes=sum(3 * frame(2 * si) for si in s)),
        "server": dict(muls=9 * sum(fi - 1 for fi in f), adds=6 * sum(fi - 1 for fi in f) + 6 * rounds,
                       draws=3 * rounds, messages=3 * len(f) + 6 * rounds, bytes=frame(1) * (3 * len(f) + 6 * rounds)),
        "collector": dict(adds=3 * len(f), muls=0),
    }
    np_ = {
        "distributor": dict(adds=sum(si * fi for si, fi in zip(s, f)), draws=sum(si * fi for si, fi in zip(s, f)),
                            messages=sum(fi + 1 for fi in f),
                            bytes=sum((fi + 1) * frame(si * fi) for si, fi in zip(s, f))),
        "server": dict(muls=sum((fi + 1) ** fi * (fi - 1) for fi in f), adds=sum((fi + 1) ** fi for fi in f),
                       draws=0, messages=sum(fi + 1 for fi in f), bytes=frame(1) * sum(fi + 1 for fi in f)),
        "collector": dict(adds=sum(f) + len(f), muls=0),
    }
    return {"three-party": tp, "n-party": np_}


def float_loop(law, x0, steps, ts=1.0, fine=200, T=1000.0):
    """Unquantized law in the loop, integrated with explicit Euler on a fine grid."""
    x = np.array(x0, dtype=float)
    h = ts / fine
    for _ in range(steps):
        u = law(x)
        for _ in range(fine):
            x1, x2 = x
            x = x + h * np.array([-x1 + x1 * x2 + x2 * u, x1 + 2 * x2 + x1**2 + x1**2 * x2 + u]) / T
    return x


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """``with criterion(3, "text"):`` records PASS/FAIL for the final report."""

    @contextlib.contextmanager
    def record(number, text):
        try:
            yield
        except BaseException:
            ACCEPTANCE[number] = (False, text)
            print(f"criterion {number}: FAIL  {text}")
            raise
        ACCEPTANCE[number] = (True, text)
        print(f"criterion {number}: PASS  {text}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def cubic_law():
    return PolynomialLaw.from_terms(CUBIC_TERMS)


@pytest.fixture
def cubic_fmt():
    return FixedPointFormat(beta=10, x_post=2, u_pre=4, degree_d=3)


@pytest.fixture
def cubic_qlaw(cubic_law, cubic_fmt):
    return quantize_law(cubic_law, cubic_fmt)


@pytest.fixture
def shipped_law_path():
    with resources.as_file(resources.files("polyshare.laws") / "cubic_plant.json") as p:
        yield p


@pytest.fixture
def demo_law():
    with resources.as_file(resources.files("polyshare.laws") / "quadratic_demo.json") as p:
        return load_law(p)
