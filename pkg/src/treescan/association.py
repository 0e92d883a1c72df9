"""Per-tree Kalman landmark bank and entropy-gated correspondence matching.

Every tree candidate is a 5-state Kalman filter over
[centroid_x, centroid_y, centroid_z, point_count, mean_ndvi] in the robot
body frame, with identity process/observation models, Q = I and R = 0.1 I.
New clusters are matched to landmarks through a two-stage gate:

1. the innovation is normalized per component (position over a fixed
   characteristic scale, count and NDVI as floored relative change) and
   turned into a probability p = exp(-0.1 * d_M) via the Mahalanobis
   distance d_M = sqrt(i' S^-1 i) with S = P + R;
2. the Shannon entropy (log base M) of the normalized probabilities over
   all M landmarks measures how ambiguous the best match is.

A cluster is paired with its argmax landmark only when p_max > th_p and
entropy < th_H; otherwise it founds a new landmark. Duplicate claims on one
landmark keep the highest-probability cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import RigidTransform
from .errors import InvariantViolationError
from .preprocess import TreeCluster

STATE_DIM = 5
#: Measurement noise from the underlying filter design: R = 0.1 * I.
MEASUREMENT_NOISE_SCALE = 0.1
#: Probability gate: pair only when the best match exceeds this.
DEFAULT_PROB_THRESHOLD = 0.5
#: Entropy gate: pair only when association ambiguity stays below this.
DEFAULT_ENTROPY_THRESHOLD = 0.8
#: Innovation normalization: position residuals divide by a fixed
#: characteristic scale (so a neighboring tree one grid spacing away scores
#: a Mahalanobis distance far beyond the probability gate), while point
#: count and NDVI are fractional changes floored to avoid blow-up near
#: zero. With p = exp(-0.1 d_M) and th_p = 0.5, the position gate works out
#: to roughly one meter of unexplained offset.
POSITION_SCALE_M = 0.125
COUNT_FLOOR = 10.0
NDVI_FLOOR = 0.05
DEFAULT_SCALES = np.array([POSITION_SCALE_M, POSITION_SCALE_M, POSITION_SCALE_M,
                           COUNT_FLOOR, NDVI_FLOOR])
#: Covariance growth cap. Q = I per predict would otherwise inflate stale
#: landmarks until they outscore live ones for every cluster; capping the
#: spectrum keeps reacquisition generous without the runaway.
COVARIANCE_CAP = 4.0
#: Landmarks unseen this long with fewer than PRUNE_MIN_OBSERVATIONS
#: updates are dropped from the bank.
PRUNE_HORIZON_S = 30.0
PRUNE_MIN_OBSERVATIONS = 3

PSD_TOLERANCE = -1e-9


@dataclass(frozen=True)
class PoseDelta:
    """Ego-motion between two consecutive scans.

    Attributes:
        v_x: Linear velocity along body x during the interval, m/s.
        omega: Angular velocity during the interval, rad/s.
        theta: Heading at the end of the interval, radians.
        dt: Interval length, seconds (>= 0).
    """

    v_x: float = 0.0
    omega: float = 0.0
    theta: float = 0.0
    dt: float = 0.0

    def __post_init__(self) -> None:
        if self.dt < 0:
            raise ValueError("dt must be non-negative")


@dataclass(frozen=True)
class ClusterMeasurement:
    """Cluster features used for correspondence matching.

    The 5-vector layout is [x, y, z, num_pt, mean_ndvi] with the centroid in
    the robot body frame. ``ndvi_mean`` is None when no point in the cluster
    carries an NDVI value; the NDVI row is then neutral in matching and
    skipped by the Kalman update.
    """

    centroid: np.ndarray
    num_pt: int
    ndvi_mean: float | None
    cluster_id: int = 0

    def __post_init__(self) -> None:
        c = np.asarray(self.centroid, dtype=np.float64).reshape(3)
        object.__setattr__(self, "centroid", c)
        if self.num_pt < 1:
            raise ValueError("num_pt must be positive")
        if self.ndvi_mean is not None and not -1.0 <= self.ndvi_mean <= 1.0:
            raise ValueError("ndvi_mean must lie in [-1, 1]")

    @classmethod
    def from_cluster(cls, cluster: TreeCluster, lidar_to_base: RigidTransform | None = None,
                     cluster_id: int | None = None) -> "ClusterMeasurement":
        centroid = cluster.centroid()
        if lidar_to_base is not None:
            centroid = lidar_to_base.apply(centroid)
        return cls(centroid=centroid, num_pt=len(cluster),
                   ndvi_mean=cluster.ndvi_mean(),
                   cluster_id=cluster.cluster_id if cluster_id is None else cluster_id)

    def as_vector(self) -> np.ndarray:
        ndvi = 0.0 if self.ndvi_mean is None else self.ndvi_mean
        return np.array([self.centroid[0], self.centroid[1], self.centroid[2],
                         float(self.num_pt), ndvi])


@dataclass(frozen=True)
class TreeLandmark:
    """Kalman state of one tracked tree, plus its running trait estimates."""

    id: int
    state: np.ndarray
    covariance: np.ndarray
    f_model: np.ndarray = field(default_factory=lambda: np.eye(STATE_DIM))
    h_model: np.ndarray = field(default_factory=lambda: np.eye(STATE_DIM))
    q_model: np.ndarray = field(default_factory=lambda: np.eye(STATE_DIM))
    r_model: np.ndarray = field(
        default_factory=lambda: MEASUREMENT_NOISE_SCALE * np.eye(STATE_DIM))
    last_seen: float = 0.0
    observation_count: int = 1
    height_est: float = 0.0
    width_est: float = 0.0
    top_ring_seen: int = -1
    fov_limited: bool = False
    #: Body-frame state snapshot taken at ``last_seen``; georeferencing pairs
    #: it with the pose of that instant.
    seen_state: np.ndarray | None = None

    def __post_init__(self) -> None:
        state = np.asarray(self.state, dtype=np.float64).reshape(STATE_DIM)
        cov = np.asarray(self.covariance, dtype=np.float64).reshape(STATE_DIM, STATE_DIM)
        check_covariance(cov)
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "covariance", cov)
        if self.seen_state is None:
            object.__setattr__(self, "seen_state", state.copy())

    @classmethod
    def from_measurement(cls, landmark_id: int, m: ClusterMeasurement,
                         timestamp: float) -> "TreeLandmark":
        return cls(id=landmark_id, state=m.as_vector(),
                   covariance=np.eye(STATE_DIM), last_seen=timestamp)


def check_covariance(p: np.ndarray) -> None:
    """Raise if a covariance is asymmetric or loses PSD beyond tolerance."""
    if not np.allclose(p, p.T, atol=1e-9):
        raise InvariantViolationError("covariance is not symmetric")
    if np.linalg.eigvalsh(p).min() < PSD_TOLERANCE:
        raise InvariantViolationError("covariance is not positive semi-definite")


def predict(landmark: TreeLandmark, delta: PoseDelta,
            covariance_cap: float = COVARIANCE_CAP) -> TreeLandmark:
    """Propagate a landmark through one scan interval.

    Ego-motion compensation in the body frame: planar coordinates rotate by
    -omega*dt about the origin, then shift by -v_x*dt along body x. The z,
    point-count, and NDVI components are untouched. The covariance grows by
    the process noise, P <- F P F' + Q, then its spectrum is clamped to
    ``covariance_cap`` so unobserved landmarks stay reacquirable without
    eventually outscoring live ones.
    """
    state = landmark.state.copy()
    ang = -delta.omega * delta.dt
    c, s = math.cos(ang), math.sin(ang)
    x, y = state[0], state[1]
    state[0] = c * x - s * y - delta.v_x * delta.dt
    state[1] = s * x + c * y
    f = landmark.f_model
    covariance = f @ landmark.covariance @ f.T + landmark.q_model
    if covariance_cap > 0:
        top = float(np.linalg.eigvalsh(covariance).max())
        if top > covariance_cap:
            covariance = covariance * (covariance_cap / top)
    return replace(landmark, state=state, covariance=covariance)


def normalized_innovation(m: ClusterMeasurement, landmark: TreeLandmark,
                          scales: np.ndarray | None = None) -> np.ndarray:
    """Dimensionless innovation between a measurement and a predicted landmark.

    Position components divide by the fixed characteristic scale
    ``scales[0:3]`` (meters); point count and NDVI are relative changes,
    (measured - predicted) / max(|predicted|, floor), with floors
    ``scales[3]`` points and ``scales[4]`` NDVI so small predicted values
    cannot blow the ratio up. When the measurement carries no NDVI, the
    NDVI component is 0 (neutral).
    """
    if scales is None:
        scales = DEFAULT_SCALES
    predicted = landmark.h_model @ landmark.state
    residual = m.as_vector() - predicted
    innovation = np.empty(STATE_DIM)
    innovation[:3] = residual[:3] / scales[:3]
    innovation[3] = residual[3] / max(abs(predicted[3]), scales[3])
    innovation[4] = residual[4] / max(abs(predicted[4]), scales[4])
    if m.ndvi_mean is None:
        innovation[4] = 0.0
    return innovation


def match_probability(innovation: np.ndarray, landmark: TreeLandmark) -> float:
    """Probability that an innovation belongs to a landmark.

    Computes the Mahalanobis distance d_M = sqrt(i' S^-1 i) under the
    innovation covariance S = H P H' + R and maps it through the exponential
    p = exp(-0.1 * d_M) in [0, 1].
    """
    h = landmark.h_model
    s = h @ landmark.covariance @ h.T + landmark.r_model
    # R = 0.1 I keeps S comfortably invertible; a failure here is a bug.
    try:
        solved = np.linalg.solve(s, innovation)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise InvariantViolationError("innovation covariance is singular") from exc
    d_m = math.sqrt(max(0.0, float(innovation @ solved)))
    return math.exp(-0.1 * d_m)


def association_entropy(probs: np.ndarray | list[float], m_count: int | None = None) -> float:
    """Normalized Shannon entropy of match probabilities, in [0, 1].

    Probabilities are normalized to sum to one and the entropy uses log base
    M (the candidate count), so the uniform distribution scores 1 and a
    delta distribution scores 0. A single candidate (M = 1) scores 0 by
    convention.

    Raises:
        ValueError: If all probabilities are zero (degenerate distribution).
    """
    p = np.asarray(probs, dtype=np.float64)
    m = p.size if m_count is None else m_count
    if m < 1 or p.size == 0:
        raise ValueError("entropy needs at least one candidate")
    total = p.sum()
    if total <= 0.0:
        raise ValueError("all-zero probabilities: degenerate distribution")
    if m == 1:
        return 0.0
    p_hat = p / total
    nz = p_hat[p_hat > 0.0]
    return float(-(nz * np.log(nz)).sum() / math.log(m))


def kalman_update(landmark: TreeLandmark, m: ClusterMeasurement,
                  timestamp: float | None = None) -> TreeLandmark:
    """Standard Kalman update of a landmark with an associated measurement.

    The update uses the raw residual in state units (the normalized
    innovation feeds only the gate). When the measurement has no NDVI, the
    NDVI residual row is zeroed so the estimate coasts. The posterior
    covariance is symmetrized to keep round-off from accumulating.
    """
    h = landmark.h_model
    p = landmark.covariance
    residual = m.as_vector() - h @ landmark.state
    if m.ndvi_mean is None:
        residual[4] = 0.0
    s = h @ p @ h.T + landmark.r_model
    gain = p @ h.T @ np.linalg.inv(s)
    state = landmark.state + gain @ residual
    cov = (np.eye(STATE_DIM) - gain @ h) @ p
    cov = 0.5 * (cov + cov.T)
    check_covariance(cov)
    ts = landmark.last_seen if timestamp is None else timestamp
    return replace(landmark, state=state, covariance=cov, last_seen=ts,
                   observation_count=landmark.observation_count + 1,
                   seen_state=state.copy())


@dataclass(frozen=True)
class ClusterDecision:
    """Gate diagnostics for one cluster in one scan."""

    cluster_id: int
    probabilities: np.ndarray
    entropy: float
    best_landmark_id: int | None
    matched: bool


@dataclass
class AssociationResult:
    """Outcome of associating one scan's clusters against the bank.

    Every cluster lands in exactly one of ``pairs`` (matched to an existing
    landmark) or ``new_landmarks``; each landmark appears in at most one
    pair. ``pairs`` holds (landmark_id, cluster index into the measurement
    list); ``new_landmark_sources`` lists the founding cluster index of each
    entry in ``new_landmarks``; per-cluster gate diagnostics sit in
    ``decisions``.
    """

    pairs: list[tuple[int, int]] = field(default_factory=list)
    new_landmarks: list[int] = field(default_factory=list)
    new_landmark_sources: list[int] = field(default_factory=list)
    decisions: list[ClusterDecision] = field(default_factory=list)


class LandmarkBank:
    """Single-writer container for the tree landmarks of one survey."""

    def __init__(self, prune_horizon: float = PRUNE_HORIZON_S,
                 prune_min_observations: int = PRUNE_MIN_OBSERVATIONS,
                 covariance_cap: float = COVARIANCE_CAP) -> None:
        self.landmarks: dict[int, TreeLandmark] = {}
        self.prune_horizon = prune_horizon
        self.prune_min_observations = prune_min_observations
        self.covariance_cap = covariance_cap
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.landmarks)

    def __iter__(self):
        return iter(sorted(self.landmarks.values(), key=lambda lm: lm.id))

    def get(self, landmark_id: int) -> TreeLandmark:
        return self.landmarks[landmark_id]

    def put(self, landmark: TreeLandmark) -> None:
        self.landmarks[landmark.id] = landmark

    def insert_new(self, m: ClusterMeasurement, timestamp: float) -> TreeLandmark:
        landmark = TreeLandmark.from_measurement(self._next_id, m, timestamp)
        self._next_id += 1
        self.landmarks[landmark.id] = landmark
        return landmark

    def predict_all(self, delta: PoseDelta) -> None:
        for lid, lm in self.landmarks.items():
            self.landmarks[lid] = predict(lm, delta, covariance_cap=self.covariance_cap)

    def prune(self, now: float) -> list[int]:
        """Drop rarely-seen stale landmarks; returns the removed ids."""
        removed = [lid for lid, lm in self.landmarks.items()
                   if now - lm.last_seen > self.prune_horizon
                   and lm.observation_count < self.prune_min_observations]
        for lid in removed:
            del self.landmarks[lid]
        return removed


def associate_scan(measurements: list[ClusterMeasurement], bank: LandmarkBank,
                   delta: PoseDelta, timestamp: float,
                   th_p: float = DEFAULT_PROB_THRESHOLD,
                   th_h: float = DEFAULT_ENTROPY_THRESHOLD,
                   scales: np.ndarray | None = None) -> AssociationResult:
    """Match one scan's cluster measurements against the landmark bank.

    All landmarks are predicted once for this scan. Each cluster is then
    gated against that snapshot: it pairs with its argmax-probability
    landmark when p_max > th_p and the association entropy stays below
    th_h, and founds a new landmark otherwise (including when the bank is
    empty or every probability underflows to zero). If several clusters
    claim the same landmark, the highest-probability claim survives and the
    losers become new landmarks; exact ties go to the lower cluster index.

    The bank is mutated: predictions are applied and new landmarks are
    inserted. Kalman updates for the returned pairs are the caller's job.
    """
    result = AssociationResult()
    bank.predict_all(delta)

    if len(bank) == 0:
        for k, m in enumerate(measurements):
            lm = bank.insert_new(m, timestamp)
            result.new_landmarks.append(lm.id)
            result.new_landmark_sources.append(k)
            result.decisions.append(ClusterDecision(
                cluster_id=m.cluster_id, probabilities=np.array([]),
                entropy=0.0, best_landmark_id=None, matched=False))
        return result

    snapshot = sorted(bank.landmarks.values(), key=lambda lm: lm.id)
    proposals: list[tuple[int, int, float]] = []  # (cluster_idx, landmark_id, prob)
    unmatched: list[int] = []

    for k, m in enumerate(measurements):
        probs = np.array([match_probability(normalized_innovation(m, lm, scales), lm)
                          for lm in snapshot])
        if probs.sum() <= 0.0:
            entropy = 1.0  # degenerate: nothing explains this cluster
            best = None
            p_best = 0.0
            matched = False
        else:
            best_idx = int(np.argmax(probs))
            best = snapshot[best_idx].id
            p_best = float(probs[best_idx])
            entropy = association_entropy(probs)
            matched = p_best > th_p and entropy < th_h
        result.decisions.append(ClusterDecision(
            cluster_id=m.cluster_id, probabilities=probs, entropy=entropy,
            best_landmark_id=best, matched=matched))
        if matched:
            proposals.append((k, best, p_best))
        else:
            unmatched.append(k)

    # Duplicate discard: one winning cluster per landmark, losers start
    # fresh; exact probability ties go to the lower cluster_id.
    best_claim: dict[int, tuple[int, float]] = {}
    for k, lid, prob in proposals:
        held = best_claim.get(lid)
        if held is None:
            best_claim[lid] = (k, prob)
            continue
        held_k, held_prob = held
        wins = prob > held_prob or (
            prob == held_prob
            and measurements[k].cluster_id < measurements[held_k].cluster_id)
        if wins:
            unmatched.append(held_k)
            best_claim[lid] = (k, prob)
        else:
            unmatched.append(k)

    for lid, (k, _prob) in sorted(best_claim.items()):
        result.pairs.append((lid, k))
    for k in sorted(unmatched):
        lm = bank.insert_new(measurements[k], timestamp)
        result.new_landmarks.append(lm.id)
        result.new_landmark_sources.append(k)
    return result
