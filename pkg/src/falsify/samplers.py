"""Sample-generation strategies for falsification campaigns.

Four interchangeable strategies over a bucketized feature space:

- ``uniform``: independent uniform draws per dimension.
- ``halton``: quasi-random low-discrepancy sequence (radical inverse in
  the first d prime bases).
- ``cross-entropy``: per-dimension categorical bucket weights nudged
  toward buckets that produced counterexamples.
- ``mab``: the upper-confidence-bound bandit over buckets, tracking
  per-bucket visit counts and per-maximal-counterexample hit counts.

All randomness is drawn from a generator derived from (master seed,
sample id), so a sampler's output for sample k depends only on the seed,
k, and the feedback absorbed so far — never on call interleaving.  That
makes serial replays and snapshot restores exact, and it keeps the
uniform and Halton streams identical no matter how many workers consume
them.

Feedback may arrive late or out of order (workers finish when they
finish); ``update`` is therefore decoupled from ``next_sample``.  Bandit
bucket statistics only count *completed* samples, and buckets that have
no completed visits yet score an infinite exploration bonus so they are
tried first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, StateError
from .monitor import falsification_vector
from .rulebook import FalsificationVector, Rulebook
from .space import FeatureSpace, SampleVector

DEFAULT_ALPHA = 0.1

SAMPLER_NAMES = ("uniform", "halton", "cross-entropy", "mab")


@dataclass(frozen=True)
class SampleFeedback:
    """Outcome of one simulated sample, as consumed by samplers."""

    sample: SampleVector
    rho: tuple[float, ...]
    b: FalsificationVector
    is_counterexample: bool

    def __post_init__(self):
        if len(self.rho) != len(self.b):
            raise DomainError("rho and b must have equal length")
        if self.is_counterexample != any(self.b):
            raise DomainError(
                "is_counterexample must equal 'any metric falsified'"
            )

    @classmethod
    def from_rho(cls, sample: SampleVector, rho) -> "SampleFeedback":
        bits = falsification_vector(rho)
        return cls(
            sample=sample,
            rho=tuple(float(r) for r in rho),
            b=bits,
            is_counterexample=any(bits),
        )


def compute_ucb(mu_hat: float, visits: int, t: int) -> float:
    """Upper confidence bound mu_hat + sqrt((2 / visits) * ln t).

    The confidence parameter is tied to time (1/delta = t), so the bonus
    grows as ln t and shrinks as visits accumulate; at t = 1 it is zero.
    """
    if visits < 1:
        raise DomainError(f"visits must be >= 1, got {visits}")
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    return float(mu_hat) + math.sqrt((2.0 / visits) * math.log(t))


class Sampler:
    """Common shell: seed handling, counters, and the sampling loop.

    Subclasses implement ``_draw(sample_id, rng) -> (values, buckets)``
    and optionally ``_absorb(feedback)``.  A sampler must be initialized
    over a feature space (directly or via ``make_sampler``) before use.
    """

    name = "base"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.space: FeatureSpace | None = None
        self.issued = 0     # next_sample calls so far
        self.completed = 0  # update calls so far

    # -- lifecycle ---------------------------------------------------------

    def initialize(self, space: FeatureSpace) -> "Sampler":
        if not isinstance(space, FeatureSpace):
            raise ConfigError(f"expected a FeatureSpace, got {type(space)}")
        self.space = space
        self._init_state(space)
        return self

    def _init_state(self, space: FeatureSpace) -> None:
        pass

    def _require_space(self) -> FeatureSpace:
        if self.space is None:
            raise StateError(
                f"{self.name!r} sampler is not initialized over a feature space"
            )
        return self.space

    def _rng(self, sample_id: int) -> np.random.Generator:
        return np.random.default_rng((self.seed, sample_id))

    # -- sampling ----------------------------------------------------------

    def next_sample(self) -> SampleVector:
        space = self._require_space()
        sid = self.issued
        values, buckets = self._draw(sid, self._rng(sid))
        self.issued += 1
        return SampleVector(
            tuple(float(v) for v in values), tuple(int(b) for b in buckets)
        )

    def _draw(self, sample_id: int, rng: np.random.Generator):
        raise NotImplementedError

    # -- feedback ----------------------------------------------------------

    def update(self, feedback: SampleFeedback) -> None:
        space = self._require_space()
        buckets = feedback.sample.buckets
        if len(buckets) != space.d:
            raise StateError(
                f"feedback has {len(buckets)} bucket indices, space has {space.d}"
            )
        for i, j in enumerate(buckets):
            if not 0 <= j < space.bucket_count:
                raise StateError(f"bucket index {j} out of range (dimension {i})")
        self._absorb(feedback)
        self.completed += 1

    def _absorb(self, feedback: SampleFeedback) -> None:
        pass

    # -- introspection -----------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-serializable state summary; never touches random streams."""
        space = self.space
        snap = {
            "sampler": self.name,
            "seed": self.seed,
            "issued": self.issued,
            "completed": self.completed,
            "dimensions": list(space.names) if space else None,
            "bucket_count": space.bucket_count if space else None,
        }
        snap.update(self._snapshot_extra())
        return snap

    def _snapshot_extra(self) -> dict:
        return {}

    def _restore_extra(self, snap: dict) -> None:
        pass


class UniformSampler(Sampler):
    name = "uniform"

    def _draw(self, sample_id, rng):
        space = self.space
        values = [d.lo + rng.random() * d.width for d in space.dims]
        return values, space.buckets_of(values)


def radical_inverse(base: int, index: int) -> float:
    """Digit-reversal fraction of ``index`` in ``base``, in [0, 1).

    Computed in exact integer arithmetic with a single final division,
    so the result is the correctly rounded value of the rational number.
    """
    if base < 2:
        raise DomainError(f"base must be >= 2, got {base}")
    if index < 0:
        raise DomainError(f"index must be >= 0, got {index}")
    num, den = 0, 1
    while index > 0:
        index, digit = divmod(index, base)
        num = num * base + digit
        den *= base
    return num / den


def first_primes(count: int) -> tuple[int, ...]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes):
            primes.append(candidate)
        candidate += 1
    return tuple(primes)


class HaltonSampler(Sampler):
    """Low-discrepancy sequence; deterministic, ignores the seed."""

    name = "halton"

    def _init_state(self, space):
        self.bases = first_primes(space.d)

    def _draw(self, sample_id, rng):
        space = self.space
        # Index 0 of the raw sequence is the all-zero point; skip it.
        index = sample_id + 1
        values = [
            d.lo + radical_inverse(base, index) * d.width
            for d, base in zip(space.dims, self.bases)
        ]
        return values, space.buckets_of(values)

    def _snapshot_extra(self):
        return {"bases": list(self.bases)}


class CrossEntropySampler(Sampler):
    """Categorical bucket weights smoothed toward counterexample buckets."""

    name = "cross-entropy"

    def __init__(self, seed: int, alpha: float = DEFAULT_ALPHA):
        super().__init__(seed)
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
        self.alpha = float(alpha)

    def _init_state(self, space):
        self.weights = np.full(
            (space.d, space.bucket_count), 1.0 / space.bucket_count
        )

    def _draw(self, sample_id, rng):
        space = self.space
        buckets = [
            int(rng.choice(space.bucket_count, p=self.weights[i]))
            for i in range(space.d)
        ]
        values = [
            space.sample_in_bucket(i, b, rng) for i, b in enumerate(buckets)
        ]
        return values, buckets

    def _absorb(self, feedback):
        if not feedback.is_counterexample:
            return
        a = self.alpha
        for i, j in enumerate(feedback.sample.buckets):
            row = self.weights[i]
            row *= 1.0 - a
            row[j] += a
            row /= row.sum()

    def _snapshot_extra(self):
        return {"alpha": self.alpha, "weights": self.weights.tolist()}

    def _restore_extra(self, snap):
        self.weights = np.array(snap["weights"], dtype=float)


class MultiArmedBanditSampler(Sampler):
    """Per-dimension UCB over buckets with maximal-counterexample counts.

    Visits count completed samples only.  Counterexample counts are kept
    per maximal falsification vector: a new vector is admitted only if no
    stored vector strictly dominates it under the rulebook, and admitting
    it evicts every stored vector it strictly dominates (their counts are
    discarded).  The per-bucket reward estimate is the proportion of
    completed visits that produced any currently-maximal counterexample.
    """

    name = "mab"

    def __init__(self, seed: int, rulebook: Rulebook):
        super().__init__(seed)
        if not isinstance(rulebook, Rulebook):
            raise ConfigError(f"expected a Rulebook, got {type(rulebook)}")
        self.rulebook = rulebook

    def _init_state(self, space):
        shape = (space.d, space.bucket_count)
        self.visits = np.zeros(shape, dtype=np.int64)
        self.counts: dict[FalsificationVector, np.ndarray] = {}
        self.init_cursor = 0

    # -- statistics --------------------------------------------------------

    def count_sum(self) -> np.ndarray:
        """Sum of counterexample counts over all maximal vectors (d x N)."""
        total = np.zeros_like(self.visits)
        for matrix in self.counts.values():
            total += matrix
        return total

    def mu_hat(self) -> np.ndarray:
        """Counterexample proportion per bucket; 0 where never visited."""
        visits = self.visits
        with np.errstate(invalid="ignore", divide="ignore"):
            mu = np.where(visits > 0, self.count_sum() / visits, 0.0)
        return mu

    def ucb_scores(self, t: int | None = None) -> np.ndarray:
        """Q matrix for time t (default: the next draw); +inf where unvisited."""
        if t is None:
            t = self.issued + 1
        visits = self.visits
        bonus = np.full(visits.shape, np.inf)
        seen = visits > 0
        bonus[seen] = np.sqrt((2.0 / visits[seen]) * math.log(t))
        return np.where(seen, self.mu_hat() + bonus, np.inf)

    # -- sampling ----------------------------------------------------------

    def _draw(self, sample_id, rng):
        space = self.space
        n = space.bucket_count
        if self.init_cursor < n:
            # Round-robin warm-up: call r probes bucket r in every dimension.
            buckets = [self.init_cursor] * space.d
            self.init_cursor += 1
        else:
            q = self.ucb_scores()
            buckets = []
            for i in range(space.d):
                row = q[i]
                ties = np.flatnonzero(row == row.max())
                buckets.append(int(ties[rng.integers(ties.size)]))
        values = [
            space.sample_in_bucket(i, b, rng) for i, b in enumerate(buckets)
        ]
        return values, buckets

    # -- feedback ----------------------------------------------------------

    def _absorb(self, feedback):
        space = self.space
        buckets = feedback.sample.buckets
        for i, j in enumerate(buckets):
            self.visits[i, j] += 1
        if not feedback.is_counterexample:
            return
        key = tuple(bool(x) for x in feedback.b)
        if len(key) != self.rulebook.metric_count:
            raise DomainError(
                f"falsification vector has {len(key)} bits, "
                f"rulebook tracks {self.rulebook.metric_count} metrics"
            )
        if key not in self.counts:
            kept, accepted = self.rulebook.insert_maximal(self.counts.keys(), key)
            if not accepted:
                return  # strictly dominated by a stored vector: not counted
            keep = set(kept)
            for old in [k for k in self.counts if k not in keep]:
                del self.counts[old]
            self.counts[key] = np.zeros(
                (space.d, space.bucket_count), dtype=np.int64
            )
        matrix = self.counts[key]
        for i, j in enumerate(buckets):
            matrix[i, j] += 1

    # -- introspection -----------------------------------------------------

    def _snapshot_extra(self):
        # Q is +inf at never-visited buckets; emit None there so the
        # snapshot stays strict JSON.  mu_hat and Q are derived views —
        # restore() recomputes them from visits and counts.
        ucb = [
            [q if math.isfinite(q) else None for q in row]
            for row in self.ucb_scores().tolist()
        ]
        return {
            "init_cursor": self.init_cursor,
            "visits": self.visits.tolist(),
            "mu_hat": self.mu_hat().tolist(),
            "ucb": ucb,
            "maximal": [list(k) for k in self.counts],
            "maximal_counts": [m.tolist() for m in self.counts.values()],
        }

    def _restore_extra(self, snap):
        self.init_cursor = int(snap["init_cursor"])
        self.visits = np.array(snap["visits"], dtype=np.int64)
        self.counts = {
            tuple(bool(b) for b in key): np.array(matrix, dtype=np.int64)
            for key, matrix in zip(snap["maximal"], snap["maximal_counts"])
        }


def make_sampler(
    name: str,
    space: FeatureSpace,
    seed: int,
    rulebook: Rulebook | None = None,
    alpha: float = DEFAULT_ALPHA,
) -> Sampler:
    """Construct and initialize a sampler by strategy name."""
    if name == "uniform":
        sampler: Sampler = UniformSampler(seed)
    elif name == "halton":
        sampler = HaltonSampler(seed)
    elif name == "cross-entropy":
        sampler = CrossEntropySampler(seed, alpha=alpha)
    elif name == "mab":
        if rulebook is None:
            raise ConfigError("the 'mab' sampler needs a rulebook")
        sampler = MultiArmedBanditSampler(seed, rulebook)
    else:
        raise ConfigError(
            f"unknown sampler {name!r}; expected one of {SAMPLER_NAMES}"
        )
    return sampler.initialize(space)


def restore(
    snap: dict,
    space: FeatureSpace,
    rulebook: Rulebook | None = None,
) -> Sampler:
    """Rebuild a sampler from snapshot(); continues the exact sequence."""
    try:
        name = snap["sampler"]
        seed = int(snap["seed"])
    except (KeyError, TypeError) as exc:
        raise StateError(f"malformed sampler snapshot: {exc}") from exc
    if snap.get("dimensions") != list(space.names):
        raise StateError(
            f"snapshot dimensions {snap.get('dimensions')} do not match "
            f"the feature space {list(space.names)}"
        )
    if snap.get("bucket_count") != space.bucket_count:
        raise StateError(
            f"snapshot bucket count {snap.get('bucket_count')} does not "
            f"match the feature space ({space.bucket_count})"
        )
    alpha = float(snap.get("alpha", DEFAULT_ALPHA))
    sampler = make_sampler(name, space, seed, rulebook=rulebook, alpha=alpha)
    sampler.issued = int(snap["issued"])
    sampler.completed = int(snap["completed"])
    sampler._restore_extra(snap)
    return sampler
