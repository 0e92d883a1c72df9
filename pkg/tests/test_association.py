"""Tests for the Kalman landmark bank and entropy-gated matching."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treescan.association import (COVARIANCE_CAP, ClusterMeasurement,
                                  LandmarkBank, PoseDelta, TreeLandmark,
                                  associate_scan, association_entropy,
                                  kalman_update, match_probability,
                                  normalized_innovation, predict)


def measurement(x=5.0, y=0.0, z=1.0, num_pt=100, ndvi=0.5, cluster_id=0):
    return ClusterMeasurement(centroid=np.array([x, y, z]), num_pt=num_pt,
                              ndvi_mean=ndvi, cluster_id=cluster_id)


def landmark_at(m: ClusterMeasurement, landmark_id=0, covariance=None):
    lm = TreeLandmark.from_measurement(landmark_id, m, timestamp=0.0)
    if covariance is not None:
        lm = TreeLandmark(id=lm.id, state=lm.state, covariance=covariance,
                          last_seen=lm.last_seen)
    return lm


class TestPredict:
    def test_stationary_covariance_grows_by_q(self):
        lm = landmark_at(measurement())
        out = predict(lm, PoseDelta(v_x=0.0, omega=0.0, theta=0.0, dt=0.5))
        assert np.allclose(out.state, lm.state)
        assert np.allclose(out.covariance, lm.covariance + np.eye(5))

    def test_forward_motion_compensation(self):
        lm = landmark_at(measurement(x=5.0, y=0.0, z=1.0))
        out = predict(lm, PoseDelta(v_x=0.5, omega=0.0, theta=0.0, dt=1.0))
        assert np.allclose(out.state[:3], [4.5, 0.0, 1.0])

    def test_rotation_compensation(self):
        lm = landmark_at(measurement(x=1.0, y=0.0, z=0.7))
        out = predict(lm, PoseDelta(v_x=0.0, omega=math.pi / 2, theta=0.0, dt=1.0))
        assert np.allclose(out.state[:3], [0.0, -1.0, 0.7], atol=1e-9)

    def test_covariance_cap(self):
        lm = landmark_at(measurement())
        for _ in range(20):
            lm = predict(lm, PoseDelta(dt=0.1))
        assert np.linalg.eigvalsh(lm.covariance).max() <= COVARIANCE_CAP + 1e-9

    def test_negative_dt_rejected(self):
        with pytest.raises(ValueError):
            PoseDelta(dt=-0.1)


class TestNormalizedInnovation:
    def test_perfect_match_is_zero(self):
        m = measurement()
        lm = landmark_at(m)
        assert np.allclose(normalized_innovation(m, lm), np.zeros(5))

    def test_count_is_fractional_change(self):
        lm = landmark_at(measurement(num_pt=100))
        m = measurement(num_pt=110)
        innovation = normalized_innovation(m, lm)
        assert innovation[3] == pytest.approx(0.10)

    def test_count_floor_guards_small_predictions(self):
        lm = landmark_at(measurement(num_pt=4))
        m = measurement(num_pt=9)
        innovation = normalized_innovation(m, lm)
        assert innovation[3] == pytest.approx(5 / 10)  # floored at 10 points

    def test_position_uses_fixed_scale(self):
        lm = landmark_at(measurement(x=0.0))
        m = measurement(x=0.25)
        innovation = normalized_innovation(m, lm)
        assert innovation[0] == pytest.approx(0.25 / 0.125)

    def test_missing_ndvi_is_neutral(self):
        lm = landmark_at(measurement(ndvi=0.5))
        m = measurement(ndvi=None)
        assert normalized_innovation(m, lm)[4] == 0.0


class TestMatchProbability:
    def test_zero_innovation_gives_one(self):
        lm = landmark_at(measurement())
        assert match_probability(np.zeros(5), lm) == 1.0

    def test_closed_form_at_unit_s(self):
        # P = 0.9 I makes S = P + R = I exactly
        lm = landmark_at(measurement(), covariance=0.9 * np.eye(5))
        innovation = np.array([10.0, 0, 0, 0, 0])
        assert match_probability(innovation, lm) == pytest.approx(math.exp(-1.0),
                                                                  abs=1e-12)

    def test_bounded_and_decreasing(self):
        lm = landmark_at(measurement(), covariance=0.9 * np.eye(5))
        last = 1.0
        for norm in [1.0, 10.0, 100.0, 1000.0]:
            p = match_probability(np.array([norm, 0, 0, 0, 0]), lm)
            assert 0.0 <= p < last
            last = p


class TestAssociationEntropy:
    def test_uniform_is_one(self):
        assert association_entropy([0.25] * 4) == pytest.approx(1.0, abs=1e-12)

    def test_delta_is_zero(self):
        assert association_entropy([1.0, 0.0, 0.0]) == 0.0

    def test_two_point_closed_form(self):
        expected = -(0.8 * math.log2(0.8) + 0.2 * math.log2(0.2))
        assert association_entropy([0.8, 0.2]) == pytest.approx(expected, abs=1e-4)
        assert association_entropy([0.8, 0.2]) == pytest.approx(0.7219, abs=1e-4)

    def test_single_candidate_is_zero(self):
        assert association_entropy([0.7]) == 0.0

    def test_all_zero_raises(self):
        with pytest.raises(ValueError):
            association_entropy([0.0, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=2,
                    max_size=12),
           st.floats(min_value=0.1, max_value=100.0))
    def test_scale_invariance_and_bounds(self, probs, scale):
        h = association_entropy(probs)
        h_scaled = association_entropy([scale * p for p in probs])
        assert h == pytest.approx(h_scaled, abs=1e-9)
        assert -1e-12 <= h <= 1.0 + 1e-12
        assert np.argmax(probs) == np.argmax([scale * p for p in probs])


class TestKalmanUpdate:
    def test_gain_with_unit_prior(self):
        m0 = measurement(x=0.0, y=0.0, z=0.0, num_pt=100, ndvi=0.0)
        lm = landmark_at(m0)  # P = I, R = 0.1 I
        m1 = measurement(x=1.0, y=0.0, z=0.0, num_pt=100, ndvi=0.0)
        out = kalman_update(lm, m1)
        assert out.state[0] == pytest.approx(1.0 / 1.1, abs=1e-12)
        assert np.allclose(out.covariance, (1.0 - 1.0 / 1.1) * np.eye(5), atol=1e-12)

    def test_zero_residual_keeps_state_shrinks_covariance(self):
        m = measurement()
        lm = landmark_at(m)
        out = kalman_update(lm, m)
        assert np.allclose(out.state, lm.state)
        assert np.trace(out.covariance) < np.trace(lm.covariance)
        assert out.observation_count == lm.observation_count + 1

    def test_constant_measurement_converges(self):
        lm = landmark_at(measurement(x=0.0, y=0.0, z=0.0, num_pt=50, ndvi=0.0))
        target = measurement(x=3.0, y=-2.0, z=1.0, num_pt=200, ndvi=0.4)
        steps = 0
        for steps in range(1, 51):
            lm = predict(lm, PoseDelta(dt=0.1))
            lm = kalman_update(lm, target)
            if np.abs(lm.state - target.as_vector()).max() < 1e-6:
                break
        assert np.abs(lm.state - target.as_vector()).max() < 1e-6
        assert steps <= 50

    def test_missing_ndvi_coasts(self):
        lm = landmark_at(measurement(ndvi=0.5))
        out = kalman_update(lm, measurement(x=5.1, ndvi=None))
        assert out.state[4] == pytest.approx(0.5)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_covariance_stays_symmetric_psd(self, seed):
        rng = np.random.default_rng(seed)
        lm = landmark_at(measurement())
        for _ in range(50):
            lm = predict(lm, PoseDelta(v_x=rng.uniform(0, 1),
                                       omega=rng.uniform(-1, 1),
                                       theta=0.0, dt=rng.uniform(0, 0.5)))
            m = measurement(x=rng.uniform(-10, 10), y=rng.uniform(-10, 10),
                            z=rng.uniform(0, 3), num_pt=int(rng.integers(30, 500)),
                            ndvi=float(rng.uniform(-1, 1)))
            lm = kalman_update(lm, m)
            p = lm.covariance
            assert np.allclose(p, p.T, atol=1e-9)
            assert np.linalg.eigvalsh(p).min() >= -1e-9


class TestAssociateScan:
    def test_empty_bank_creates_all(self):
        bank = LandmarkBank()
        ms = [measurement(x=5, cluster_id=0), measurement(x=12, cluster_id=1)]
        result = associate_scan(ms, bank, PoseDelta(), timestamp=1.0)
        assert result.pairs == []
        assert len(result.new_landmarks) == 2
        assert len(bank) == 2

    def test_perfect_reobservation_pairs(self):
        bank = LandmarkBank()
        m = measurement()
        associate_scan([m], bank, PoseDelta(), timestamp=0.0)
        result = associate_scan([m], bank, PoseDelta(), timestamp=0.1)
        assert len(result.pairs) == 1
        assert result.new_landmarks == []
        d = result.decisions[0]
        assert d.matched and d.entropy == 0.0  # single candidate: M = 1
        assert d.probabilities[0] == pytest.approx(1.0)

    def test_two_identical_candidates_force_new_landmark(self):
        bank = LandmarkBank()
        m = measurement()
        bank.insert_new(m, 0.0)
        bank.insert_new(m, 0.0)
        result = associate_scan([m], bank, PoseDelta(), timestamp=0.1)
        d = result.decisions[0]
        assert d.entropy == pytest.approx(1.0, abs=1e-9)
        assert not d.matched
        assert len(result.new_landmarks) == 1
        assert len(bank) == 3

    def test_duplicate_claims_keep_higher_probability(self):
        bank = LandmarkBank()
        anchor = measurement(x=5.0)
        associate_scan([anchor], bank, PoseDelta(), timestamp=0.0)
        close = measurement(x=5.02, cluster_id=0)
        closer = measurement(x=5.0, cluster_id=1)
        result = associate_scan([close, closer], bank, PoseDelta(), timestamp=0.1)
        assert len(result.pairs) == 1
        lid, k = result.pairs[0]
        assert k == 1                       # the closer cluster wins
        assert result.new_landmarks != []   # the loser founds a new landmark
        assert len(bank) == 2

    def test_duplicate_tie_goes_to_lower_cluster_id(self):
        bank = LandmarkBank()
        anchor = measurement(x=5.0)
        associate_scan([anchor], bank, PoseDelta(), timestamp=0.0)
        twin_a = measurement(x=5.0, cluster_id=0)
        twin_b = measurement(x=5.0, cluster_id=1)
        result = associate_scan([twin_a, twin_b], bank, PoseDelta(), timestamp=0.1)
        assert result.pairs[0][1] == 0

    def test_cluster_conservation(self):
        rng = np.random.default_rng(8)
        bank = LandmarkBank()
        for scan in range(10):
            ms = [measurement(x=float(rng.uniform(2, 20)),
                              y=float(rng.uniform(-5, 5)),
                              num_pt=int(rng.integers(30, 300)), cluster_id=i)
                  for i in range(int(rng.integers(0, 5)))]
            result = associate_scan(ms, bank, PoseDelta(v_x=0.5, dt=0.1),
                                    timestamp=0.1 * scan)
            assert len(result.pairs) + len(result.new_landmarks) == len(ms)
            paired = [lid for lid, _ in result.pairs]
            assert len(paired) == len(set(paired))


class TestBank:
    def test_prune_drops_stale_rarely_seen(self):
        bank = LandmarkBank(prune_horizon=30.0, prune_min_observations=3)
        bank.insert_new(measurement(x=3.0), timestamp=0.0)   # seen once
        veteran = bank.insert_new(measurement(x=9.0), timestamp=0.0)
        bank.put(kalman_update(kalman_update(veteran, measurement(x=9.0)),
                               measurement(x=9.0), timestamp=0.0))
        removed = bank.prune(now=31.0)
        assert len(removed) == 1
        assert len(bank) == 1

    def test_recent_landmarks_survive(self):
        bank = LandmarkBank()
        bank.insert_new(measurement(), timestamp=100.0)
        assert bank.prune(now=105.0) == []
