"""Dataset layer: parsing, grouping, validation, and noise policies."""

import numpy as np
import pytest

from rangecert.problem import (
    AnchorSet,
    DuplicateMeasurementError,
    MeasurementSet,
    NoiseModel,
    OrderingError,
    ParseError,
    ProblemData,
    UnknownAnchorError,
    covariance_for,
    flatten,
    load_problem,
    save_problem,
)
from rangecert.sim import SimConfig, simulate


def _write(path, text):
    path.write_text(text, encoding="utf-8")


def _two_anchor_files(tmp_path):
    _write(tmp_path / "anchors.csv", "id,x,y\nA,0.0,0.0\nB,3.0,0.0\n")
    _write(tmp_path / "measurements.csv",
           "t,anchor_id,distance\n0.0,A,1.0\n0.0,B,2.0\n")
    return tmp_path / "anchors.csv", tmp_path / "measurements.csv"


def test_minimal_grouping(tmp_path):
    anchors, measurements = _two_anchor_files(tmp_path)
    problem = load_problem(anchors, measurements)
    assert problem.n_times == 1
    assert problem.measurements.counts().tolist() == [2]
    assert problem.measurements.total == 2


def test_same_timestamp_rows_share_index():
    ms = MeasurementSet.from_rows(
        times=np.array([0.0, 0.0]),
        anchor_index=np.array([0, 1]),
        distance=np.array([1.0, 2.0]),
    )
    assert ms.n_times == 1
    assert ms.counts().tolist() == [2]


def test_grouping_tolerance_uses_representative():
    # 1e-10 apart groups together; a fresh group starts past the tolerance.
    ms = MeasurementSet.from_rows(
        times=np.array([0.0, 1e-10, 1.0]),
        anchor_index=np.array([0, 1, 0]),
        distance=np.array([1.0, 1.0, 1.0]),
    )
    assert ms.n_times == 2
    assert ms.counts().tolist() == [2, 1]


def test_one_anchor_per_timestamp_regime():
    n = 1600
    rng = np.random.default_rng(0)
    ms = MeasurementSet.from_rows(
        times=np.arange(n, dtype=float),
        anchor_index=np.arange(n) % 4,
        distance=rng.uniform(0.5, 2.0, n),
    )
    assert ms.n_times == n
    assert ms.total == n
    assert np.all(ms.counts() == 1)


def test_unsorted_rows_are_sorted_stably():
    ms = MeasurementSet.from_rows(
        times=np.array([1.0, 0.0, 1.0]),
        anchor_index=np.array([0, 1, 2]),
        distance=np.array([5.0, 6.0, 7.0]),
    )
    assert ms.times.tolist() == [0.0, 1.0]
    aidx, dist = ms.observations(1)
    assert aidx.tolist() == [0, 2]
    assert dist.tolist() == [5.0, 7.0]


def test_nonmonotone_grouped_times_rejected():
    with pytest.raises(OrderingError):
        MeasurementSet(
            times=np.array([1.0, 0.5]),
            anchor_index=np.array([0, 0]),
            distance=np.array([1.0, 1.0]),
            offsets=np.array([0, 1, 2]),
        )


def test_duplicate_measurement_rejected():
    with pytest.raises(DuplicateMeasurementError):
        MeasurementSet.from_rows(
            times=np.array([0.0, 0.0]),
            anchor_index=np.array([1, 1]),
            distance=np.array([1.0, 1.1]),
        )


def test_negative_distance_rejected():
    with pytest.raises(ValueError):
        MeasurementSet.from_rows(
            times=np.array([0.0]),
            anchor_index=np.array([0]),
            distance=np.array([-0.5]),
        )


def test_parse_error_carries_line_number(tmp_path):
    anchors = tmp_path / "anchors.csv"
    measurements = tmp_path / "measurements.csv"
    _write(anchors, "id,x,y\nA,0.0,0.0\n")
    _write(measurements,
           "t,anchor_id,distance\n0.0,A,1.0\n0.5,A,not_a_number\n")
    with pytest.raises(ParseError) as err:
        load_problem(anchors, measurements)
    assert err.value.line_no == 3


def test_unknown_anchor_rejected(tmp_path):
    anchors = tmp_path / "anchors.csv"
    measurements = tmp_path / "measurements.csv"
    _write(anchors, "id,x,y\nA,0.0,0.0\n")
    _write(measurements, "t,anchor_id,distance\n0.0,Z,1.0\n")
    with pytest.raises(UnknownAnchorError):
        load_problem(anchors, measurements)


def test_comment_lines_ignored(tmp_path):
    anchors = tmp_path / "anchors.csv"
    measurements = tmp_path / "measurements.csv"
    _write(anchors, "id,x,y\n# station layout\nA,0.0,0.0\nB,3.0,0.0\n")
    _write(measurements,
           "t,anchor_id,distance\n# run 1\n0.0,A,1.0\n0.0,B,2.0\n")
    problem = load_problem(anchors, measurements)
    assert problem.anchors.count == 2
    assert problem.measurements.total == 2


def test_round_trip_is_identical(tmp_path):
    problem, _ = simulate(SimConfig(n_times=17, rng_seed=11))
    paths = save_problem(problem, tmp_path)
    reloaded = load_problem(paths["anchors"], paths["measurements"],
                            noise=problem.noise,
                            ground_truth_file=paths["ground_truth"])
    np.testing.assert_array_equal(problem.anchors.coordinates,
                                  reloaded.anchors.coordinates)
    np.testing.assert_array_equal(problem.measurements.times,
                                  reloaded.measurements.times)
    np.testing.assert_array_equal(problem.measurements.distance,
                                  reloaded.measurements.distance)
    np.testing.assert_array_equal(problem.measurements.anchor_index,
                                  reloaded.measurements.anchor_index)
    np.testing.assert_array_equal(problem.ground_truth[1],
                                  reloaded.ground_truth[1])


def test_total_equals_row_count():
    problem, _ = simulate(SimConfig(n_times=23, rng_seed=4))
    assert problem.measurements.total == problem.measurements.counts().sum()
    flat = flatten(problem)
    assert flat.total == problem.measurements.total


def test_covariance_squared_constant_identity():
    anchors = AnchorSet(np.zeros((2, 3)), ("A", "B", "C"))
    ms = MeasurementSet.from_rows(
        times=np.zeros(3) + np.arange(3) * 0.0,  # grouped into one index
        anchor_index=np.arange(3),
        distance=np.array([1.0, 2.0, 3.0]),
    )
    noise = NoiseModel(sigma_d=1.0, policy="squared-constant", sigma_sq=1.0)
    problem = ProblemData(anchors, ms, noise)
    np.testing.assert_allclose(covariance_for(0, problem), np.eye(3))


def test_covariance_propagated_value_matches_monte_carlo():
    d, sigma_d = 2.0, 0.05
    noise = NoiseModel(sigma_d=sigma_d, policy="propagated")
    var, fell_back = noise.variances(np.array([d]))
    assert not fell_back
    assert var[0] == pytest.approx(4.0 * d * d * sigma_d * sigma_d)
    # Monte-Carlo oracle for the variance of (d + eta)^2.
    rng = np.random.default_rng(123)
    samples = (d + rng.normal(0.0, sigma_d, 1_000_000)) ** 2
    assert var[0] == pytest.approx(samples.var(), rel=0.05)


def test_covariance_propagated_zero_distance_fallback():
    anchors = AnchorSet(np.zeros((2, 1)), ("A",))
    ms = MeasurementSet.from_rows(
        times=np.array([0.0]), anchor_index=np.array([0]),
        distance=np.array([0.0]))
    noise = NoiseModel(sigma_d=0.05, policy="propagated")
    problem = ProblemData(anchors, ms, noise)
    with pytest.warns(UserWarning):
        cov = covariance_for(0, problem)
    assert cov[0, 0] == pytest.approx(noise.squared_std**2)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(sigma_d=0.0)
    with pytest.raises(ValueError):
        NoiseModel(sigma_d=0.1, policy="no-such-policy")


def test_ground_truth_dimension_mismatch(tmp_path):
    anchors, measurements = _two_anchor_files(tmp_path)
    _write(tmp_path / "ground_truth.csv", "t,x,y,z\n0.0,0.0,0.0,0.0\n")
    with pytest.raises(ValueError):
        load_problem(anchors, measurements,
                     ground_truth_file=tmp_path / "ground_truth.csv")
