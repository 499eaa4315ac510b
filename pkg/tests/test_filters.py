import pytest

from lobsift.events import OrderLifecycle, Terminal
from lobsift.filters import (
    ExclusionSet,
    FilterKind,
    FilterSpec,
    apply_filter,
    lifetime_filter,
    modcount_filter,
    modtime_filter,
    read_oid_list,
    write_oid_list,
)

from conftest import random_lifecycles

MS = 1_000_000


def lc(oid, entry, exit, mods=0, gap=None):
    return OrderLifecycle(oid, entry, exit, mods, gap, Terminal.CANCELLED)


@pytest.fixture
def book():
    # hand-built population with lifetimes 50/100/150/500 ms and a spread of
    # modification behaviour
    return {
        1: lc(1, 0, 50 * MS),                       # fast, untouched
        2: lc(2, 0, 100 * MS, mods=1),              # on the lifetime boundary
        3: lc(3, 0, 150 * MS, mods=2, gap=30 * MS),
        4: lc(4, 0, 500 * MS, mods=3, gap=50 * MS),
        5: lc(5, 0, 500 * MS, mods=5, gap=200 * MS),
    }


class TestFilterBehaviour:
    def test_lifetime_excludes_below_threshold(self, book):
        assert lifetime_filter(book, 100 * MS).excluded == {1}

    def test_lifetime_boundary_retained(self, book):
        # order 2 lives exactly 100ms and must survive the 100ms filter
        assert 2 not in lifetime_filter(book, 100 * MS)
        assert 2 in lifetime_filter(book, 100 * MS + 1)

    def test_modcount_excludes_above_threshold(self, book):
        assert modcount_filter(book, 1).excluded == {3, 4, 5}
        assert modcount_filter(book, 3).excluded == {5}
        assert modcount_filter(book, 5).excluded == frozenset()

    def test_modtime_requires_two_mods(self, book):
        # orders 1 and 2 have no final gap, so no threshold can touch them
        assert modtime_filter(book, 10_000 * MS).excluded == {3, 4, 5}

    def test_modtime_boundary_retained(self, book):
        assert modtime_filter(book, 50 * MS).excluded == {3}
        assert modtime_filter(book, 50 * MS + 1).excluded == {3, 4}

    def test_unfiltered_excludes_nothing(self, book):
        assert apply_filter(FilterSpec.unfiltered(), book).excluded == frozenset()

    def test_dispatch_matches_direct_calls(self, book):
        pairs = [
            (FilterSpec.lifetime(100 * MS), lifetime_filter(book, 100 * MS)),
            (FilterSpec.modcount(3), modcount_filter(book, 3)),
            (FilterSpec.modtime(50 * MS), modtime_filter(book, 50 * MS)),
        ]
        for spec, direct in pairs:
            assert apply_filter(spec, book) == direct


class TestComprehensionEquivalence:
    """Each filter must agree with the obvious one-line set builder."""

    def test_random_books(self, rng):
        for trial in range(30):
            book = random_lifecycles(rng, n_orders=150)
            t = int(rng.integers(1, 400)) * MS
            m = int(rng.integers(0, 8))
            assert lifetime_filter(book, t).excluded == {
                o for o, c in book.items() if c.lifetime < t
            }
            assert modcount_filter(book, m).excluded == {
                o for o, c in book.items() if c.mod_count > m
            }
            assert modtime_filter(book, t).excluded == {
                o for o, c in book.items()
                if c.mod_count >= 2 and c.last_mod_gap < t
            }


class TestNesting:
    """Tighter thresholds can only grow (or for mod-count shrink) the set."""

    def test_monotone_in_threshold(self, rng):
        for trial in range(10):
            book = random_lifecycles(rng, n_orders=150)
            cuts = sorted(int(rng.integers(1, 500)) * MS for _ in range(4))
            for lo, hi in zip(cuts, cuts[1:]):
                assert lifetime_filter(book, lo).excluded <= lifetime_filter(book, hi).excluded
                assert modtime_filter(book, lo).excluded <= modtime_filter(book, hi).excluded
            counts = sorted(int(rng.integers(0, 9)) for _ in range(4))
            for lo, hi in zip(counts, counts[1:]):
                assert modcount_filter(book, hi).excluded <= modcount_filter(book, lo).excluded


class TestSpecs:
    def test_labels(self):
        assert FilterSpec.unfiltered().label == "UF"
        assert FilterSpec.lifetime(100 * MS).label == "LF-100ms"
        assert FilterSpec.lifetime(1000 * MS).label == "LF-1s"
        assert FilterSpec.modcount(3).label == "MF-3"
        assert FilterSpec.modtime(50 * MS).label == "MTF-50ms"

    def test_unfiltered_rejects_threshold(self):
        with pytest.raises(ValueError):
            FilterSpec(FilterKind.UNFILTERED, 5)

    def test_threshold_required(self):
        with pytest.raises(ValueError):
            FilterSpec(FilterKind.LIFETIME)

    def test_nonpositive_duration_rejected(self):
        with pytest.raises(ValueError):
            FilterSpec.lifetime(0)
        with pytest.raises(ValueError):
            FilterSpec.modtime(-5)

    def test_modcount_zero_allowed(self):
        assert FilterSpec.modcount(0).label == "MF-0"

    def test_exclusion_set_container(self, book):
        exc = lifetime_filter(book, 200 * MS)
        assert 1 in exc and 3 in exc and 4 not in exc
        assert len(exc) == 3


def test_oid_list_round_trip(tmp_path, rng):
    book = random_lifecycles(rng, n_orders=80)
    exc = lifetime_filter(book, 120 * MS)
    path = tmp_path / "excluded.txt"
    write_oid_list(path, exc)
    assert read_oid_list(path) == exc.excluded
    lines = path.read_text().splitlines()
    assert lines == sorted(lines, key=int)
