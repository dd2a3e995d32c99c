import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fgray.data import (
    CompetingRisksData,
    DataError,
    load_csv,
    save_csv,
    standardize,
    validate,
)


def small_data():
    return CompetingRisksData(
        times=[1.0, 2.0, 3.0],
        status=[1, 0, 2],
        covariates=[[0.1, 1.0], [0.2, -1.0], [0.3, 0.0]],
    )


class TestConstruction:
    def test_horizon_defaults_to_max_time(self):
        d = small_data()
        assert d.horizon == 3.0

    def test_administrative_censoring_beyond_horizon(self):
        d = CompetingRisksData(
            times=[1.0, 2.0, 5.0], status=[1, 1, 2],
            covariates=np.zeros((3, 1)), horizon=3.0,
        )
        assert d.times[2] == 3.0
        assert d.status[2] == 0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            CompetingRisksData(times=[1.0], status=[1, 0], covariates=[[1.0]])

    def test_arrays_are_immutable(self):
        d = small_data()
        with pytest.raises(ValueError):
            d.times[0] = 9.0

    def test_subset_keeps_horizon(self):
        d = small_data()
        s = d.subset([0, 2])
        assert s.n == 2
        assert s.horizon == d.horizon


class TestValidate:
    def test_well_formed_passes(self):
        assert validate(small_data()).ok

    def test_invalid_status_code(self):
        d = CompetingRisksData(
            times=[1.0, 2.0], status=[1, 3], covariates=np.zeros((2, 1))
        )
        report = validate(d)
        assert not report.ok
        assert any("invalid status code" in v for v in report.violations)

    def test_no_cause1_events(self):
        d = CompetingRisksData(
            times=[1.0, 2.0], status=[0, 0], covariates=np.zeros((2, 1))
        )
        report = validate(d)
        assert not report.ok
        assert any("no cause-1" in v for v in report.violations)

    def test_nan_covariate_and_negative_time(self):
        d = CompetingRisksData(
            times=[-1.0, 2.0], status=[1, 0],
            covariates=[[np.nan], [1.0]],
        )
        report = validate(d)
        msgs = " ".join(report.violations)
        assert "non-finite covariate" in msgs
        assert "invalid time" in msgs


class TestStandardize:
    def test_three_point_column(self):
        d = CompetingRisksData(
            times=[1, 2, 3], status=[1, 0, 2], covariates=[[1.0], [2.0], [3.0]]
        )
        out, tr = standardize(d)
        np.testing.assert_allclose(out.covariates[:, 0], [-1.0, 0.0, 1.0])
        assert tr.means[0] == 2.0
        assert tr.scales[0] == 1.0

    def test_idempotent(self, rng):
        Z = rng.standard_normal((50, 4)) * 3 + 1
        d = CompetingRisksData(
            times=np.arange(1, 51, dtype=float),
            status=np.resize([1, 0, 2], 50), covariates=Z,
        )
        once, _ = standardize(d)
        twice, tr2 = standardize(once)
        np.testing.assert_allclose(twice.covariates, once.covariates, atol=1e-12)
        np.testing.assert_allclose(tr2.means, 0.0, atol=1e-12)
        np.testing.assert_allclose(tr2.scales, 1.0, atol=1e-12)

    def test_large_draw_has_exact_moments(self, rng):
        n, p = 200, 300
        Z = rng.standard_normal((n, p)) * rng.uniform(0.5, 2.0, size=p)
        d = CompetingRisksData(
            times=rng.exponential(1, n) + 0.1,
            status=np.resize([1, 0, 2], n), covariates=Z,
        )
        out, _ = standardize(d)
        assert np.abs(out.covariates.mean(axis=0)).max() < 1e-12
        assert np.abs(out.covariates.std(axis=0, ddof=1) - 1).max() < 1e-12

    def test_back_transform_round_trip(self, rng):
        Z = rng.standard_normal((30, 3)) * [2.0, 0.5, 1.5]
        d = CompetingRisksData(
            times=np.arange(1, 31, dtype=float),
            status=np.resize([1, 0, 2], 30), covariates=Z,
        )
        _, tr = standardize(d)
        beta_std = np.array([0.5, -1.0, 0.0])
        beta_orig = tr.coefficients_to_original(beta_std)
        np.testing.assert_allclose(beta_orig * tr.scales, beta_std, atol=1e-12)

    def test_constant_column_strict(self):
        d = CompetingRisksData(
            times=[1, 2, 3], status=[1, 0, 2],
            covariates=[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
        )
        with pytest.raises(DataError, match="constant"):
            standardize(d)

    def test_constant_column_dropped(self):
        d = CompetingRisksData(
            times=[1, 2, 3], status=[1, 0, 2],
            covariates=[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
        )
        out, tr = standardize(d, drop_constant=True)
        assert out.p == 1
        assert tr.dropped == (1,)
        assert tr.kept == (0,)


class TestCsv:
    def test_basic_round_trip(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,z1,z2\n1.5,1,0.25,-1.0\n2.5,0,0.5,2.0\n")
        d = load_csv(path)
        assert d.n == 2 and d.p == 2
        assert d.times[0] == 1.5
        assert d.status.tolist() == [1, 0]

    def test_missing_status_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,z1\n1.0,2.0\n")
        with pytest.raises(DataError, match="status"):
            load_csv(path)

    def test_bad_status_cites_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,z1\n1.0,1,0.5\n2.0,5,0.1\n")
        with pytest.raises(DataError, match="row 3"):
            load_csv(path)

    def test_missing_value_is_error(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,z1\n1.0,1,\n")
        with pytest.raises(DataError, match="missing value"):
            load_csv(path)

    def test_large_round_trip_bit_identical(self, tmp_path, rng):
        n = 1000
        d = CompetingRisksData(
            times=rng.exponential(2.0, n),
            status=rng.integers(0, 3, n),
            covariates=rng.standard_normal((n, 5)) * 1e3,
        )
        # default horizon only: a custom horizon is not a CSV column
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        save_csv(d, p1)
        d2 = load_csv(p1)
        save_csv(d2, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(d.times, d2.times)
        assert np.array_equal(d.status, d2.status)
        assert np.array_equal(d.covariates, d2.covariates)

    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_round_trip_property(self, tmp_path_factory, data):
        n = data.draw(st.integers(2, 12))
        p = data.draw(st.integers(1, 4))
        finite = st.floats(
            allow_nan=False, allow_infinity=False,
            min_value=-1e12, max_value=1e12,
        )
        times = np.array(
            data.draw(st.lists(st.floats(0.001, 1e6), min_size=n, max_size=n))
        )
        status = np.array(data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n)))
        Z = np.array(
            data.draw(
                st.lists(
                    st.lists(finite, min_size=p, max_size=p),
                    min_size=n, max_size=n,
                )
            )
        )
        d = CompetingRisksData(times=times, status=status, covariates=Z)
        path = tmp_path_factory.mktemp("csv") / "d.csv"
        save_csv(d, path)
        d2 = load_csv(path)
        assert np.array_equal(d.times, d2.times)
        assert np.array_equal(d.status, d2.status)
        assert np.array_equal(d.covariates, d2.covariates)
        assert d.horizon == d2.horizon
