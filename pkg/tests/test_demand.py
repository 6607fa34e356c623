import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolpricing.demand import (
    REQUEST_HEADER,
    TravelTimeProvider,
    TripRequest,
    load_matrix_provider,
    load_requests,
    private_metrics,
    write_requests,
)
from poolpricing.errors import DataError, DomainError
from poolpricing.experiment.config import DemandParams
from poolpricing.experiment.pipeline import generate_demand

coord = st.tuples(st.floats(-50, 50), st.floats(-50, 50))


class TestTripRequest:
    def test_origin_equals_destination(self):
        with pytest.raises(DomainError):
            TripRequest("a", (1.0, 2.0), (1.0, 2.0), 0.0)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            TripRequest("a", (0, 0), (1, 0), -1.0)

    def test_non_finite(self):
        with pytest.raises(DomainError):
            TripRequest("a", (0, math.nan), (1, 0), 0.0)

    def test_id_is_string(self):
        assert TripRequest(7, (0, 0), (1, 0), 0.0).id == "7"


class TestProvider:
    def test_euclidean_345(self):
        d, t = private_metrics(TripRequest("a", (0, 0), (3, 4), 0), TravelTimeProvider("euclidean", 30.0))
        assert d == pytest.approx(5.0, abs=1e-12)
        assert t == pytest.approx(600.0, abs=1e-9)

    def test_manhattan(self):
        d, t = private_metrics(TripRequest("a", (0, 0), (3, 4), 0), TravelTimeProvider("manhattan", 30.0))
        assert d == pytest.approx(7.0, abs=1e-12)
        assert t == pytest.approx(7.0 / 30.0 * 3600.0)

    def test_haversine_one_degree_latitude(self):
        p = TravelTimeProvider("haversine", 30.0)
        assert p.distance_km((0.0, 0.0), (0.0, 1.0)) == pytest.approx(111.195, abs=0.01)

    def test_bad_mode_and_speed(self):
        with pytest.raises(DomainError):
            TravelTimeProvider("teleport", 30.0)
        with pytest.raises(DomainError):
            TravelTimeProvider("euclidean", 0.0)

    @settings(max_examples=100, deadline=None)
    @given(coord, coord, coord, st.sampled_from(["euclidean", "manhattan"]))
    def test_triangle_inequality(self, a, b, c, mode):
        p = TravelTimeProvider(mode, 25.0)
        assert p.time_s(a, b) + p.time_s(b, c) >= p.time_s(a, c) - 1e-9
        assert p.time_s(a, b) >= 0

    @settings(max_examples=50, deadline=None)
    @given(coord, coord)
    def test_deterministic_and_consistent(self, a, b):
        p = TravelTimeProvider("euclidean", 30.0)
        assert p.time_s(a, b) == p.time_s(a, b)
        assert p.pairwise_s(np.array([a]), np.array([b]))[0, 0] == pytest.approx(p.time_s(a, b), rel=1e-12)

    def test_matrix_provider(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text(",1,2,3\n1,0,120,300\n2,130,0,\n3,290,140,0\n")
        p = load_matrix_provider(f, speed_kmh=36.0)
        assert p.time_s((1, 0), (3, 0)) == 300.0
        assert p.distance_km((1, 0), (3, 0)) == pytest.approx(3.0)
        d, t = private_metrics(TripRequest("r", (1, 0), (2, 0), 0), p)
        assert (d, t) == (pytest.approx(1.2), 120.0)
        with pytest.raises(LookupError):
            p.time_s((2, 0), (3, 0))
        with pytest.raises(LookupError):
            p.time_s((9, 0), (1, 0))

    def test_matrix_label_mismatch(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text(",a,b\nb,0,1\na,1,0\n")
        with pytest.raises(DataError):
            load_matrix_provider(f)


class TestRequestCsv:
    def write(self, tmp_path, body):
        f = tmp_path / "req.csv"
        f.write_text(",".join(REQUEST_HEADER) + "\n" + body)
        return f

    def test_three_rows_in_order(self, tmp_path):
        f = self.write(tmp_path, "c,0,0,1,1,5\na,1,1,2,2,0\nb,2,2,0,0,10\n")
        reqs = load_requests(f)
        assert [r.id for r in reqs] == ["c", "a", "b"]
        assert reqs[2].destination == (0.0, 0.0) and reqs[2].request_time == 10.0

    def test_duplicate_id_named(self, tmp_path):
        f = self.write(tmp_path, "a,0,0,1,1,5\na,1,1,2,2,0\n")
        with pytest.raises(DataError, match="'a'"):
            load_requests(f)

    def test_malformed_row_named(self, tmp_path):
        f = self.write(tmp_path, "a,0,0,1,1,5\nb,1,x,2,2,0\n")
        with pytest.raises(DataError, match="row 3"):
            load_requests(f)

    def test_non_finite_row(self, tmp_path):
        f = self.write(tmp_path, "a,0,0,1,inf,5\n")
        with pytest.raises(DataError, match="row 2"):
            load_requests(f)

    def test_wrong_header(self, tmp_path):
        f = tmp_path / "req.csv"
        f.write_text("id,x,y\n")
        with pytest.raises(DataError):
            load_requests(f)

    def test_generated_batch_round_trip(self, tmp_path):
        reqs = generate_demand(DemandParams(), seed=5)
        assert len(reqs) == 150
        write_requests(reqs, tmp_path / "a.csv")
        back = load_requests(tmp_path / "a.csv")
        assert back == reqs
        write_requests(back, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
