"""Per-sample construction of the mild and the aggressive pipeline.

The mild ("basic") pipeline draws a small fixed number of operators with
conservative magnitudes.  The aggressive ("heavy") pipeline extends it in one
of three modes: prepending extra randomly drawn stages (``extra_number``),
scaling the basic magnitudes up (``bigger_magnitude``), or prepending stages
drawn from a caller-supplied operator pool (``more_types``).  In the
prepending modes the extra stages run first and the shared basic stages last,
so stripping the prefix recovers the basic pipeline exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError, ParameterError
from .rng import DOMAIN_APPLY, RngStream
from .transforms import Pipeline, TransformSpec, pipeline_key, registry

HEAVY_MODES = ("extra_number", "bigger_magnitude", "more_types")

# conservative magnitude window for every randomly drawn stage
MAGNITUDE_LOW = 0.2
MAGNITUDE_HIGH = 0.5


@dataclass
class BranchConfig:
    basic_ops_per_sample: int = 2
    heavy_mode: str = "extra_number"
    m_upper: int = 10
    magnitude_boost: float = 18.0 / 14.0
    extra_type_pool: tuple[str, ...] | None = None  # None -> full mode registry

    def __post_init__(self):
        if self.basic_ops_per_sample < 0:
            raise ParameterError(f"basic_ops_per_sample must be >= 0, got {self.basic_ops_per_sample}")
        if self.heavy_mode not in HEAVY_MODES:
            raise ParameterError(f"heavy_mode must be one of {HEAVY_MODES}, got {self.heavy_mode!r}")
        if self.m_upper < 1:
            raise ParameterError(f"m_upper must be >= 1, got {self.m_upper}")
        if self.magnitude_boost < 1.0:
            raise ParameterError(f"magnitude_boost must be >= 1, got {self.magnitude_boost}")


@dataclass
class BranchPair:
    basic: Pipeline
    heavy: Pipeline
    m_drawn: int


def _draw_stages(count: int, pool: tuple[str, ...], rng: RngStream) -> tuple[TransformSpec, ...]:
    stages = []
    for _ in range(count):
        op = pool[int(rng.integers(0, len(pool)))]
        magnitude = float(rng.uniform(MAGNITUDE_LOW, MAGNITUDE_HIGH))
        stages.append(TransformSpec(op, probability=1.0, magnitude=magnitude))
    return tuple(stages)


def draw_basic(config: BranchConfig, mode: str, rng: RngStream) -> Pipeline:
    """Sample ``basic_ops_per_sample`` operators uniformly with replacement,
    each applied with probability 1 at a magnitude from the conservative
    window."""
    pool = registry(mode)
    return Pipeline(_draw_stages(config.basic_ops_per_sample, pool, rng))


def draw_heavy(basic: Pipeline, config: BranchConfig, mode: str, rng: RngStream) -> BranchPair:
    """Build the aggressive pipeline from an already-drawn basic pipeline."""
    if config.heavy_mode == "bigger_magnitude":
        boosted = tuple(
            TransformSpec(s.op, s.probability, min(1.0, s.magnitude * config.magnitude_boost))
            for s in basic.stages
        )
        return BranchPair(basic=basic, heavy=Pipeline(boosted), m_drawn=0)

    if config.heavy_mode == "more_types":
        pool = config.extra_type_pool if config.extra_type_pool is not None else registry(mode)
        if len(pool) == 0:
            raise ConfigurationError("more_types mode requires a nonempty extra_type_pool")
        unknown = [op for op in pool if op not in registry(mode)]
        if unknown:
            raise ConfigurationError(f"extra_type_pool names unregistered operators: {unknown}")
    else:
        pool = registry(mode)

    m = 1 + int(rng.integers(0, config.m_upper))
    extra = _draw_stages(m, pool, rng)
    return BranchPair(basic=basic, heavy=Pipeline(extra + basic.stages), m_drawn=m)


def apply_stream(
    root_seed: int,
    pipeline: Pipeline,
    epoch: int,
    batch: int,
    sample: int,
    stream: RngStream | None = None,
) -> RngStream:
    """Application stream keyed by the pipeline's content.

    Two identical pipelines at the same coordinates replay identical
    randomness, so forcing the heavy branch equal to the basic one yields
    bit-identical augmented features.  Passing ``stream`` reseats an existing
    object instead of constructing a new one (hot-loop path).
    """
    key = root_seed ^ pipeline_key(pipeline)
    if stream is None:
        return RngStream(key, DOMAIN_APPLY, epoch, batch, sample)
    return stream.reseat(epoch, batch, sample, root_seed=key)
