"""Compression operators, their (C, delta, r) profiles and statistical verifiers.

Every operator is a pure function of (kind, input vector, keyed random stream),
so reference and communication-efficient algorithm variants can consume
identical draws by sharing stream keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "CompressionError",
    "Identity",
    "UnbiasedQuantize",
    "TopK",
    "RandK",
    "NormSign",
    "RescaledNormSign",
    "CompressorKind",
    "CompressorProfile",
    "CompressedMessage",
    "RngStream",
    "TAG_X_DIFF",
    "TAG_Y_DIFF",
    "TAG_X_EF",
    "TAG_Y_EF",
    "parse_compressor",
    "compressor_label",
    "compress",
    "compress_rows",
    "bit_cost",
    "analytic_profile",
    "empirical_profile",
    "estimate_variance_ratio",
    "estimate_contraction",
]


class CompressionError(ValueError):
    """Raised for invalid operator parameters or inputs."""


# ---------------------------------------------------------------------------
# operator kinds

@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class UnbiasedQuantize:
    """Unbiased b-bit q-norm quantizer with uniform dithering."""

    bits: int
    q: float  # 1, 2 or math.inf

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise CompressionError(f"quantizer needs bits >= 1, got {self.bits}")
        if self.q not in (1, 2, math.inf):
            raise CompressionError(f"norm index must be 1, 2 or inf, got {self.q!r}")


@dataclass(frozen=True)
class TopK:
    """Keep the k entries of largest absolute value (ties to the lowest index)."""

    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise CompressionError(f"top-k needs k >= 1, got {self.k}")


@dataclass(frozen=True)
class RandK:
    """Keep a uniformly random subset of exactly k entries."""

    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise CompressionError(f"random-k needs k >= 1, got {self.k}")


@dataclass(frozen=True)
class NormSign:
    """Map x to ||x||_q * sign(x)."""

    q: float

    def __post_init__(self) -> None:
        if self.q not in (1, 2, math.inf):
            raise CompressionError(f"norm index must be 1, 2 or inf, got {self.q!r}")


@dataclass(frozen=True)
class RescaledNormSign:
    """Norm-sign output divided by a scale r (contractive for r = p)."""

    q: float
    r: float

    def __post_init__(self) -> None:
        if self.q not in (1, 2, math.inf):
            raise CompressionError(f"norm index must be 1, 2 or inf, got {self.q!r}")
        if self.r <= 0:
            raise CompressionError(f"scale r must be positive, got {self.r!r}")


CompressorKind = Identity | UnbiasedQuantize | TopK | RandK | NormSign | RescaledNormSign

_STOCHASTIC_KINDS = (UnbiasedQuantize, RandK)


def _parse_q(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infty", "infinity"):
        return math.inf
    q = float(t)
    if q not in (1.0, 2.0):
        raise CompressionError(f"norm index must be 1, 2 or inf, got {text!r}")
    return q


def parse_compressor(text: str) -> CompressorKind:
    """Parse a config string such as "topk:k=1" or "quant:b=2,q=inf"."""
    head, _, rest = text.strip().partition(":")
    head = head.strip().lower()
    args: dict[str, str] = {}
    if rest:
        for part in rest.split(","):
            key, eq, val = part.partition("=")
            if not eq:
                raise CompressionError(f"malformed compressor argument {part!r} in {text!r}")
            args[key.strip().lower()] = val.strip()
    try:
        if head == "identity":
            return Identity()
        if head == "quant":
            return UnbiasedQuantize(bits=int(args["b"]), q=_parse_q(args["q"]))
        if head == "topk":
            return TopK(k=int(args["k"]))
        if head == "randk":
            return RandK(k=int(args["k"]))
        if head == "normsign":
            return NormSign(q=_parse_q(args["q"]))
        if head == "normsign-rescaled":
            return RescaledNormSign(q=_parse_q(args["q"]), r=float(args["r"]))
    except KeyError as exc:
        raise CompressionError(f"compressor {text!r} is missing argument {exc}") from None
    raise CompressionError(f"unknown compressor kind {head!r}")


def _q_text(q: float) -> str:
    return "inf" if q == math.inf else str(int(q))


def compressor_label(kind: CompressorKind) -> str:
    """Inverse of parse_compressor, used in CSV column labels and reports."""
    if isinstance(kind, Identity):
        return "identity"
    if isinstance(kind, UnbiasedQuantize):
        return f"quant:b={kind.bits},q={_q_text(kind.q)}"
    if isinstance(kind, TopK):
        return f"topk:k={kind.k}"
    if isinstance(kind, RandK):
        return f"randk:k={kind.k}"
    if isinstance(kind, NormSign):
        return f"normsign:q={_q_text(kind.q)}"
    if isinstance(kind, RescaledNormSign):
        return f"normsign-rescaled:q={_q_text(kind.q)},r={kind.r:g}"
    raise CompressionError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# keyed random streams (splitmix64 counter hash)

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

TAG_X_DIFF = 1
TAG_Y_DIFF = 2
TAG_X_EF = 3
TAG_Y_EF = 4
TAG_INIT = 5


def _mix64(z: np.ndarray) -> np.ndarray:
    # operates on uint64 arrays; wraparound is intentional
    z = (z ^ (z >> np.uint64(30))) * _MUL1
    z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


def _u64(x: int | np.ndarray) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return np.atleast_1d(x).astype(np.uint64)
    return np.asarray([x & _MASK], dtype=np.uint64)


def _stream_state(seed: int, agent: int | np.ndarray, iteration: int, tag: int) -> np.ndarray:
    """Per-agent stream states as a 1-d uint64 array."""
    h = _mix64(_u64(seed) + _PHI)
    h = _mix64(h ^ (_u64(agent) + _PHI))
    h = _mix64(h ^ (_u64(iteration) + _PHI))
    h = _mix64(h ^ (_u64(tag) + _PHI))
    return h


@lru_cache(maxsize=128)
def _agent_chain(seed: int, n: int) -> np.ndarray:
    h = _mix64(_u64(seed) + _PHI)
    h = _mix64(h ^ (_u64(np.arange(n)) + _PHI))
    h.setflags(write=False)
    return h


def _stream_states_tags(seed: int, n: int, iteration: int, tags: tuple[int, ...]) -> np.ndarray:
    """States for agents 0..n-1 under each tag, tag-major, shape (len(tags)*n,).

    Identical values to stacking :func:`_stream_state` per tag; one fused
    chain for the simulation inner loop.
    """
    h = _mix64(_agent_chain(seed, n) ^ (_u64(iteration) + _PHI))
    t = np.asarray([x & _MASK for x in tags], dtype=np.uint64)
    return _mix64(h[None, :] ^ (t[:, None] + _PHI)).ravel()


def _state_uniform(state: np.ndarray, m: int, offset: int = 0) -> np.ndarray:
    """m doubles in [0, 1) per state row."""
    idx = np.arange(offset + 1, offset + m + 1, dtype=np.uint64) * _PHI
    z = _mix64(state[:, None] + idx[None, :])
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by (seed, agent, iteration, tag).

    Identical keys produce identical sequences; distinct keys are
    statistically independent.  Streams are stateless: ``uniform(m)`` always
    returns the same block for the same key, with ``offset`` selecting later
    blocks when a caller needs more than one.
    """

    seed: int
    agent: int = 0
    iteration: int = 0
    tag: int = 0

    def uniform(self, m: int, offset: int = 0) -> np.ndarray:
        state = _stream_state(self.seed, self.agent, self.iteration, self.tag)
        return _state_uniform(state, m, offset)[0]

    def subset(self, p: int, k: int) -> np.ndarray:
        """Uniformly random k-subset of range(p): indices of the k smallest draws."""
        u = self.uniform(p)
        if k == 1:
            return np.array([int(np.argmin(u))])
        return np.sort(np.argpartition(u, k - 1)[:k])


# ---------------------------------------------------------------------------
# the operators

@dataclass(frozen=True)
class CompressedMessage:
    """Decompressed-equivalent payload plus the bits the protocol would send."""

    payload: np.ndarray
    bit_cost: int


def _check_input(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise CompressionError(f"input must be a nonempty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise CompressionError("input has NaN or Inf entries")
    return x


def _need_rng(kind: CompressorKind, rng: RngStream | None) -> RngStream:
    if rng is None:
        raise CompressionError(f"{type(kind).__name__} needs an RngStream")
    return rng


def _row_norms(m: np.ndarray, q: float) -> np.ndarray:
    if q == math.inf:
        return np.abs(m).max(axis=1)
    if q == 1:
        return np.abs(m).sum(axis=1)
    return np.sqrt((m * m).sum(axis=1))


def _quantize_rows(m: np.ndarray, kind: UnbiasedQuantize, u: np.ndarray) -> np.ndarray:
    scale = 2.0 ** (kind.bits - 1)
    norms = _row_norms(m, kind.q)
    safe = np.where(norms > 0, norms, 1.0)[:, None]
    level = np.floor(scale * np.abs(m) / safe + u)
    out = (safe / scale) * np.sign(m) * level
    out[norms == 0] = 0.0
    return out


def _topk_rows(m: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(m)
    if k == 1:
        # argmax takes the first maximum, i.e. ties go to the lowest index
        rows = np.arange(m.shape[0])
        keep = np.abs(m).argmax(axis=1)
        out[rows, keep] = m[rows, keep]
        return out
    # stable argsort on -|m| breaks ties toward the lowest index
    order = np.argsort(-np.abs(m), axis=1, kind="stable")
    rows = np.arange(m.shape[0])[:, None]
    keep = order[:, :k]
    out[rows, keep] = m[rows, keep]
    return out


def _randk_rows(m: np.ndarray, k: int, u: np.ndarray) -> np.ndarray:
    # kept set = indices of the k smallest uniforms, as in RngStream.subset
    out = np.zeros_like(m)
    if k == 1:
        rows = np.arange(m.shape[0])
        keep = u.argmin(axis=1)
        out[rows, keep] = m[rows, keep]
        return out
    rows = np.arange(m.shape[0])[:, None]
    keep = np.argpartition(u, k - 1, axis=1)[:, :k]
    out[rows, keep] = m[rows, keep]
    return out


def _apply_rows(kind: CompressorKind, m: np.ndarray, u: np.ndarray | None) -> np.ndarray:
    p = m.shape[1]
    if isinstance(kind, Identity):
        return m.copy()
    if isinstance(kind, UnbiasedQuantize):
        assert u is not None
        return _quantize_rows(m, kind, u)
    if isinstance(kind, TopK):
        if kind.k > p:
            raise CompressionError(f"top-k with k={kind.k} exceeds dimension p={p}")
        return _topk_rows(m, kind.k)
    if isinstance(kind, RandK):
        if kind.k > p:
            raise CompressionError(f"random-k with k={kind.k} exceeds dimension p={p}")
        assert u is not None
        return _randk_rows(m, kind.k, u)
    if isinstance(kind, NormSign):
        return _row_norms(m, kind.q)[:, None] * np.sign(m)
    if isinstance(kind, RescaledNormSign):
        return (_row_norms(m, kind.q)[:, None] / kind.r) * np.sign(m)
    raise CompressionError(f"unknown kind {kind!r}")


def compress(kind: CompressorKind, x: np.ndarray, rng: RngStream | None = None) -> CompressedMessage:
    """Apply a compression operator to one vector.

    Deterministic kinds ignore ``rng``; the quantizer and random-k draw all
    their randomness from it.  The zero vector maps to the zero vector for
    every kind.
    """
    x = _check_input(x)
    p = x.size
    u = None
    if isinstance(kind, _STOCHASTIC_KINDS):
        u = _need_rng(kind, rng).uniform(p)[None, :]
    payload = _apply_rows(kind, x[None, :], u)[0]
    return CompressedMessage(payload=payload, bit_cost=bit_cost(kind, p))


def compress_rows(kind: CompressorKind, m: np.ndarray, seed: int, iteration: int, tag: int) -> np.ndarray:
    """Compress each row of ``m`` with the stream keyed by (seed, row, iteration, tag).

    Bit-identical to calling :func:`compress` row by row; vectorized for the
    simulation inner loop.
    """
    m = np.asarray(m, dtype=float)
    u = None
    if isinstance(kind, _STOCHASTIC_KINDS):
        states = _stream_state(seed, np.arange(m.shape[0]), iteration, tag)
        u = _state_uniform(states, m.shape[1])
    return _apply_rows(kind, m, u)


def compress_rows_multi(kind: CompressorKind, blocks: list[np.ndarray], tags: list[int],
                        seed: int, iteration: int) -> list[np.ndarray]:
    """Compress several same-shaped row blocks in one pass, one tag per block.

    Equivalent to ``[compress_rows(kind, b, seed, iteration, t) ...]`` but
    with a single vectorized application; the engine batches the x/y (and
    error-feedback) compressions of one iteration this way.
    """
    n = blocks[0].shape[0]
    stacked = np.concatenate(blocks, axis=0)
    u = None
    if isinstance(kind, _STOCHASTIC_KINDS):
        states = _stream_states_tags(seed, n, iteration, tuple(tags))
        u = _state_uniform(states, stacked.shape[1])
    out = _apply_rows(kind, stacked, u)
    return [out[i * n:(i + 1) * n] for i in range(len(blocks))]


# ---------------------------------------------------------------------------
# bit accounting

def bit_cost(kind: CompressorKind, p: int) -> int:
    """Bits one agent transmits for one compressed vector of dimension p.

    64-bit floats; sparsifiers send (value, index) pairs; norm-based kinds
    send the norm plus a sign bit per entry; the quantizer sends the norm,
    signs and b-bit integers.
    """
    if p < 1:
        raise CompressionError(f"dimension must be positive, got {p}")
    if isinstance(kind, Identity):
        return 64 * p
    if isinstance(kind, UnbiasedQuantize):
        return 64 + p + kind.bits * p
    if isinstance(kind, (TopK, RandK)):
        return kind.k * (64 + math.ceil(math.log2(p)))
    if isinstance(kind, (NormSign, RescaledNormSign)):
        return 64 + p
    raise CompressionError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# profiles

@dataclass(frozen=True)
class CompressorProfile:
    """Unified operator description: variance bound C, contraction delta, scale r."""

    C: float
    delta: float
    r: float
    provenance: str = "analytic"

    def __post_init__(self) -> None:
        if not (0 < self.delta <= 1):
            raise CompressionError(f"delta must be in (0, 1], got {self.delta!r}")
        if self.r <= 0:
            raise CompressionError(f"r must be positive, got {self.r!r}")
        if self.C < 0:
            raise CompressionError(f"C must be nonnegative, got {self.C!r}")


def analytic_profile(kind: CompressorKind, p: int) -> CompressorProfile | None:
    """Known (C, delta, r) values; None when no analytic constant is available.

    The b-bit quantizer has no closed-form C here, so callers fall back to
    :func:`empirical_profile` for it.
    """
    if p < 1:
        raise CompressionError(f"dimension must be positive, got {p}")
    if isinstance(kind, Identity):
        return CompressorProfile(C=0.0, delta=1.0, r=1.0)
    if isinstance(kind, (TopK, RandK)):
        if kind.k >= p:
            return CompressorProfile(C=0.0, delta=1.0, r=1.0)
        delta = kind.k / p
        return CompressorProfile(C=1.0 - delta, delta=delta, r=1.0)
    if isinstance(kind, NormSign):
        c = float((p - 1) ** 2) if kind.q == 1 else float(p - 1)
        delta = 1.0 / p**2 if kind.q == math.inf else 1.0 / p
        if p == 1:
            return CompressorProfile(C=0.0, delta=1.0, r=1.0)
        return CompressorProfile(C=c, delta=delta, r=float(p))
    if isinstance(kind, RescaledNormSign):
        base = analytic_profile(NormSign(q=kind.q), p)
        assert base is not None
        if kind.r != base.r:
            return None
        # the rescaled operator is itself contractive: C' = 1 - delta, r' = 1
        return CompressorProfile(C=1.0 - base.delta, delta=base.delta, r=1.0)
    if isinstance(kind, UnbiasedQuantize):
        return None
    raise CompressionError(f"unknown kind {kind!r}")


def _test_inputs(p: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm stress inputs: Gaussian directions, sparse vectors, one-hots."""
    out = np.empty((count, p))
    for i in range(count):
        mode = i % 3
        if mode == 0:
            v = rng.standard_normal(p)
        elif mode == 1:
            v = np.zeros(p)
            nnz = int(rng.integers(1, max(2, p // 4 + 1)))
            idx = rng.choice(p, size=nnz, replace=False)
            v[idx] = rng.standard_normal(nnz)
        else:
            v = np.zeros(p)
            v[int(rng.integers(0, p))] = 1.0
        norm = np.linalg.norm(v)
        if norm == 0:
            v[0] = 1.0
            norm = 1.0
        out[i] = v / norm
    return out


_INNER_REPS = 50


def _mean_sq_error(kind: CompressorKind, x: np.ndarray, r: float, seed: int, trial: int) -> tuple[float, float]:
    """Mean and standard error of ||C(x)/r - x||^2 over the operator's randomness."""
    if isinstance(kind, _STOCHASTIC_KINDS):
        errs = np.empty(_INNER_REPS)
        for rep in range(_INNER_REPS):
            q = compress(kind, x, RngStream(seed=seed, agent=trial, iteration=rep)).payload
            errs[rep] = float(np.sum((q / r - x) ** 2))
        se = float(errs.std(ddof=1) / math.sqrt(_INNER_REPS)) if _INNER_REPS > 1 else 0.0
        return float(errs.mean()), se
    q = compress(kind, x).payload
    return float(np.sum((q / r - x) ** 2)), 0.0


def estimate_variance_ratio(kind: CompressorKind, p: int, trials: int = 10_000,
                            rng: int | np.random.Generator = 0) -> float:
    """Empirical max over inputs of E||C(x) - x||^2 / ||x||^2."""
    return estimate_contraction(kind, 1.0, p, trials, rng)


def estimate_contraction(kind: CompressorKind, r: float, p: int, trials: int = 10_000,
                         rng: int | np.random.Generator = 0) -> float:
    """Empirical max over inputs of E||C(x)/r - x||^2 / ||x||^2."""
    if trials < 1000:
        raise CompressionError(f"need trials >= 1000, got {trials}")
    if r <= 0:
        raise CompressionError(f"r must be positive, got {r!r}")
    gen = np.random.default_rng(rng)
    inner = _INNER_REPS if isinstance(kind, _STOCHASTIC_KINDS) else 1
    count = max(1, trials // inner)
    xs = _test_inputs(p, count, gen)
    worst = 0.0
    for t in range(count):
        mean, _ = _mean_sq_error(kind, xs[t], r, seed=int(gen.integers(2**32)), trial=t)
        worst = max(worst, mean)  # inputs are unit norm
    return worst


def empirical_profile(kind: CompressorKind, p: int, trials: int = 10_000,
                      rng: int | np.random.Generator = 0) -> CompressorProfile:
    """Profile from the measured variance ratio, inflated by a 5% safety margin.

    Contractive form (r = 1) when the measured C stays below 1; otherwise the
    unbiased form r = C + 1, delta = 1/(C + 1), which is valid for the dithered
    quantizer.
    """
    c_hat = 1.05 * estimate_variance_ratio(kind, p, trials, rng)
    if c_hat < 1.0:
        return CompressorProfile(C=c_hat, delta=1.0 - c_hat if c_hat > 0 else 1.0,
                                 r=1.0, provenance="empirical")
    if not isinstance(kind, UnbiasedQuantize):
        raise CompressionError(
            f"no empirical profile rule for biased kind {compressor_label(kind)} with C >= 1"
        )
    return CompressorProfile(C=c_hat, delta=1.0 / (c_hat + 1.0), r=c_hat + 1.0,
                             provenance="empirical")


def profile_for(kind: CompressorKind, p: int, trials: int = 10_000,
                rng: int | np.random.Generator = 0) -> CompressorProfile:
    """Analytic profile when known, empirical otherwise."""
    prof = analytic_profile(kind, p)
    if prof is not None:
        return prof
    return empirical_profile(kind, p, trials, rng)
