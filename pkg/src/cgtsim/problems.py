"""Synthetic ridge-regression instances, gradient oracles and problem constants."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


class ProblemError(ValueError):
    """Raised for invalid problem parameters or agent indices."""


@dataclass(frozen=True)
class RidgeProblem:
    """One (u_i, v_i) sample per agent with an L2 penalty.

    Local objective: f_i(x) = (u_i^T x - v_i)^2 + rho * ||x||^2, and the
    network minimizes their average.
    """

    U: np.ndarray  # (n, p) features, one row per agent
    v: np.ndarray  # (n,) observations
    rho: float
    x_tilde: np.ndarray | None = None  # generating parameters, kept for tests

    def __post_init__(self) -> None:
        u = np.asarray(self.U, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.ndim != 2 or v.shape != (u.shape[0],):
            raise ProblemError(f"inconsistent shapes U{u.shape}, v{v.shape}")
        if self.rho <= 0:
            raise ProblemError(f"penalty rho must be positive, got {self.rho!r}")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "U", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    def objective(self, x: np.ndarray) -> float:
        """f(x) = (1/n) sum_i f_i(x)."""
        res = self.U @ x - self.v
        return float(np.mean(res**2) + self.rho * float(x @ x))


@dataclass(frozen=True)
class ProblemConstants:
    mu: float
    L_i: np.ndarray
    L: float

    @property
    def kappa(self) -> float:
        return self.L / self.mu


@dataclass(frozen=True)
class OptimalSolution:
    x_star: np.ndarray
    f_star: float


def generate_ridge(n: int, p: int, rho: float, noise_std: float, seed: int) -> RidgeProblem:
    """Draw u_i uniform on [-1, 1]^p and v_i = u_i^T x~_i + noise.

    The generating parameters x~_i are constant vectors at evenly spaced
    levels i/(n-1) in [0, 1] (level 0.5 for a single agent).
    """
    if n < 1 or p < 1:
        raise ProblemError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    if rho <= 0:
        raise ProblemError(f"penalty rho must be positive, got {rho!r}")
    if noise_std < 0:
        raise ProblemError(f"noise_std must be nonnegative, got {noise_std!r}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=(n, p))
    levels = np.full(n, 0.5) if n == 1 else np.arange(n) / (n - 1)
    x_tilde = np.repeat(levels[:, None], p, axis=1)
    v = np.einsum("ij,ij->i", u, x_tilde) + noise_std * rng.standard_normal(n)
    return RidgeProblem(U=u, v=v, rho=rho, x_tilde=x_tilde)


def local_gradient(pb: RidgeProblem, i: int, x: np.ndarray) -> np.ndarray:
    """grad f_i(x) = 2 (u_i^T x - v_i) u_i + 2 rho x."""
    if not 0 <= i < pb.n:
        raise ProblemError(f"agent index {i} out of range for n={pb.n}")
    x = np.asarray(x, dtype=float)
    return 2.0 * (pb.U[i] @ x - pb.v[i]) * pb.U[i] + 2.0 * pb.rho * x


def gradient_matrix(pb: RidgeProblem, X: np.ndarray) -> np.ndarray:
    """Stacked local gradients: row i is grad f_i(X[i])."""
    res = (pb.U * X).sum(axis=1) - pb.v
    return (2.0 * res)[:, None] * pb.U + (2.0 * pb.rho) * X


def optimal_solution(pb: RidgeProblem) -> OptimalSolution:
    """Closed-form minimizer (sum u_i u_i^T + n rho I)^-1 sum u_i v_i."""
    a = pb.U.T @ pb.U + pb.n * pb.rho * np.eye(pb.dim)
    x_star = np.linalg.solve(a, pb.U.T @ pb.v)
    return OptimalSolution(x_star=x_star, f_star=pb.objective(x_star))


def constants(pb: RidgeProblem) -> ProblemConstants:
    """Strong convexity of the average objective and per-agent smoothness."""
    hess = (2.0 / pb.n) * (pb.U.T @ pb.U) + 2.0 * pb.rho * np.eye(pb.dim)
    mu = float(np.linalg.eigvalsh(hess)[0])
    l_i = 2.0 * np.einsum("ij,ij->i", pb.U, pb.U) + 2.0 * pb.rho
    return ProblemConstants(mu=mu, L_i=l_i, L=float(l_i.max()))


def dump_text(pb: RidgeProblem) -> str:
    """Serialize (U, v, rho) with 17 significant digits for exact reload."""
    out = io.StringIO()
    out.write(f"n = {pb.n}\np = {pb.dim}\nrho = {pb.rho:.17g}\n")
    for i in range(pb.n):
        row = " ".join(f"{x:.17g}" for x in pb.U[i])
        out.write(f"u[{i}] = {row}\n")
    out.write("v = " + " ".join(f"{x:.17g}" for x in pb.v) + "\n")
    return out.getvalue()


def load_text(text: str) -> RidgeProblem:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        fields[key.strip()] = val.strip()
    try:
        n = int(fields["n"])
        p = int(fields["p"])
        rho = float(fields["rho"])
        u = np.array([[float(t) for t in fields[f"u[{i}]"].split()] for i in range(n)])
        v = np.array([float(t) for t in fields["v"].split()])
    except KeyError as exc:
        raise ProblemError(f"problem dump is missing field {exc}") from None
    if u.shape != (n, p) or v.shape != (n,):
        raise ProblemError("problem dump has inconsistent dimensions")
    return RidgeProblem(U=u, v=v, rho=rho)
