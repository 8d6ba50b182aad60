import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdsens.scenario import build_case
from mdsens.survey import (ABSENT, ElectrodeLayout, Quadrupole, configs_from_csv, configs_to_csv, count_configs,
                           dipole_dipole, enumerate_configs, wenner_alpha)


def _line(n, a=0.66):
    return ElectrodeLayout(np.array([[i * a, 0.0, 0.0] for i in range(n)]))


class TestNamedArrays:
    def test_wenner_four(self):
        assert wenner_alpha([10, 11, 12, 13]) == [Quadrupole(10, 13, 11, 12)]

    def test_wenner_five(self):
        assert len(wenner_alpha(range(5))) == 2

    def test_wenner_no_room(self):
        assert wenner_alpha(range(4), 2) == []

    def test_dipole_dipole_four(self):
        # C2, C1, P1, P2 along the line
        assert dipole_dipole([10, 11, 12, 13], 1, 1) == [Quadrupole(11, 10, 12, 13)]

    def test_dipole_dipole_no_room(self):
        assert dipole_dipole(range(4), 1, 2) == []

    def test_dipole_dipole_six(self):
        assert len(dipole_dipole(range(6), 1, 1)) == 3

    def test_too_short(self):
        with pytest.raises(ValueError):
            wenner_alpha(range(3))
        with pytest.raises(ValueError):
            dipole_dipole(range(6), 0, 1)


class TestQuadrupole:
    def test_validation(self):
        with pytest.raises(ValueError):
            Quadrupole(0, 0, 1, 2)
        with pytest.raises(ValueError):
            Quadrupole(ABSENT, ABSENT, 1, 2)
        with pytest.raises(ValueError):
            Quadrupole(0, 1, ABSENT, ABSENT)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 20), min_size=4, max_size=4, unique=True),
           st.booleans(), st.booleans())
    def test_canonical_shared_by_reciprocal(self, idx, remote_x1, remote_y1):
        x0, x1, y0, y1 = idx
        q = Quadrupole(x0, ABSENT if remote_x1 else x1, y0, ABSENT if remote_y1 else y1)
        c = q.canonical()
        assert c == q.reciprocal().canonical()
        assert c.canonical() == c


class TestEnumerate:
    def test_four_electrodes(self):
        rows = enumerate_configs(_line(4))
        kinds = [sum(i == ABSENT for i in q.as_tuple()) for q in rows]
        assert len(rows) == 21
        assert kinds.count(0) == 3 and kinds.count(1) == 12 and kinds.count(2) == 6

    def test_count_formula(self):
        assert count_configs(4) == 21
        assert count_configs(48) == 636756

    def test_forty_eight(self):
        layout = ElectrodeLayout(build_case(1).positions)
        rows, k = enumerate_configs(layout, return_k=True)
        assert len(rows) == 636756
        capped = enumerate_configs(layout, 1e4, return_k=True)[0]
        assert 635000 <= len(capped) <= 636756

    def test_zero_cap(self):
        assert enumerate_configs(_line(6), 0.0) == []

    def test_unique_sorted_canonical(self):
        rows = enumerate_configs(_line(7))
        tuples = [q.as_tuple() for q in rows]
        assert len(set(tuples)) == len(tuples)
        assert all(q.canonical() == q for q in rows)
        key = [tuple(99 if i == ABSENT else i for i in t) for t in tuples]
        assert key == sorted(key)

    def test_no_reciprocal_pairs(self):
        rows = set(q.as_tuple() for q in enumerate_configs(_line(6)))
        for t in rows:
            r = Quadrupole(*t).reciprocal().as_tuple()
            assert r == t or r not in rows

    def test_cap_filters_large_k(self):
        rows, k = enumerate_configs(_line(8), 5.0, return_k=True)
        assert np.all(k < 5.0)
        assert len(rows) < count_configs(8)

    def test_layout_errors(self):
        with pytest.raises(ValueError):
            ElectrodeLayout(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            enumerate_configs(_line(1))


class TestCsv:
    def test_round_trip(self):
        rows, k = enumerate_configs(_line(5), return_k=True)
        text = configs_to_csv(rows, k)
        assert text.splitlines()[0] == "x0,x1,y0,y1,k_factor"
        qs, k2 = configs_from_csv(text)
        assert [q.as_tuple() for q in qs] == [tuple(int(v) for v in r) for r in rows]
        assert np.array_equal(k, k2)

    def test_bad_header(self):
        with pytest.raises(ValueError):
            configs_from_csv("a,b,c\n")
