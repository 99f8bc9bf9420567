"""Linear-convergence certificates for the compressed gradient tracking runs.

The per-iteration errors (optimization, consensus, tracking, compression and,
with error feedback, the accumulator norms) obey a componentwise linear
recursion w^{k+1} <= M w^k with a nonnegative transition matrix M: 5x5 for
the plain algorithm, 7x7 with error feedback.  A spectral radius below
1 - eta*mu/2 certifies geometric convergence, and a positive test vector
with M eps <= theta eps witnesses it componentwise.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .compression import CompressorProfile
from .problems import ProblemConstants
from .topology import SpectralInfo


class AnalysisError(ValueError):
    """Raised for violated preconditions or infeasible parameter chains."""


def _tau_default(contraction: float) -> float:
    """Slack parameter in (1, 1/(1-contraction)); geometric midpoint, 2 at the boundary."""
    if contraction >= 1.0:
        return 2.0
    return 1.0 / math.sqrt(1.0 - contraction)


@dataclass(frozen=True)
class CgtConstants:
    """Inputs and derived constants of the 5x5 error system."""

    n: int
    mu: float
    L: float
    s: float
    norm_IminusW: float
    C: float
    delta: float
    r: float
    alpha_x: float
    alpha_y: float
    gamma: float
    eta: float
    tau_x: float
    tau_y: float
    # derived
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    c_x: float
    c_y: float
    t_x: float
    t_y: float

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def rho_tilde(self) -> float:
        return 1.0 - self.gamma * self.s


def cgt_constants(prob: ProblemConstants, spec: SpectralInfo, profile: CompressorProfile,
                  alpha_x: float, alpha_y: float, gamma: float, eta: float,
                  n: int, tau_x: float | None = None, tau_y: float | None = None) -> CgtConstants:
    """Assemble the error-system constants for given hyperparameters."""
    for name, alpha in (("alpha_x", alpha_x), ("alpha_y", alpha_y)):
        if not 0 < alpha <= 1.0 / profile.r + 1e-12:
            raise AnalysisError(f"{name}={alpha!r} outside (0, 1/r] for r={profile.r!r}")
    s, niw = spec.s, spec.norm_IminusW
    c, delta, r = profile.C, profile.delta, profile.r
    tx_contr = alpha_x * r * delta
    ty_contr = alpha_y * r * delta
    tau_x = _tau_default(tx_contr) if tau_x is None else tau_x
    tau_y = _tau_default(ty_contr) if tau_y is None else tau_y
    if tau_x <= 1 or tau_y <= 1:
        raise AnalysisError("slack parameters tau must exceed 1")
    c_x = tau_x * (1.0 - tx_contr)
    c_y = tau_y * (1.0 - ty_contr)
    if c_x >= 1.0 or c_y >= 1.0:
        raise AnalysisError(
            f"infeasible: c_x={c_x!r}, c_y={c_y!r} must be < 1 "
            "(compression too weak for the chosen alpha/tau)"
        )
    t_x = 3.0 * tau_x / (tau_x - 1.0)
    t_y = 3.0 * tau_y / (tau_y - 1.0)
    return CgtConstants(
        n=n, mu=prob.mu, L=prob.L, s=s, norm_IminusW=niw, C=c, delta=delta, r=r,
        alpha_x=alpha_x, alpha_y=alpha_y, gamma=gamma, eta=eta, tau_x=tau_x, tau_y=tau_y,
        c1=2.0 / s,
        c2=2.0 * c / s * niw**2,
        c3=12.0 * prob.L**2 / s,
        c4=6.0 * niw**2 / s,
        c5=t_x * niw**2,
        c6=t_x * c * niw**2,
        c7=t_y * c * niw**2,
        c8=t_y * niw**2,
        c_x=c_x, c_y=c_y, t_x=t_x, t_y=t_y,
    )


@dataclass(frozen=True)
class EfcgtConstants:
    """Inputs and derived constants of the 7x7 error-feedback system."""

    n: int
    mu: float
    L: float
    s: float
    norm_IminusW: float
    delta: float
    alpha_x: float
    alpha_y: float
    gamma: float
    eta: float
    tau_x: float
    tau_y: float
    d1: float
    d2: float
    d3: float
    d4: float
    d_x: float
    d_y: float
    t_x: float
    t_y: float

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def rho_tilde(self) -> float:
        return 1.0 - self.gamma * self.s


def contractive_delta(profile: CompressorProfile) -> float:
    """Contraction coefficient of the un-scaled operator, required by error feedback.

    Profiles with r = 1 are already contractive; otherwise C < 1 implies
    delta = 1 - C.  Anything else is outside the error-feedback theory.
    """
    if profile.r == 1.0:
        return profile.delta
    if profile.C < 1.0:
        return 1.0 - profile.C
    raise AnalysisError(
        f"error-feedback certification needs a contractive compressor; "
        f"got C={profile.C!r} with r={profile.r!r}"
    )


def efcgt_constants(prob: ProblemConstants, spec: SpectralInfo, profile: CompressorProfile,
                    alpha_x: float, alpha_y: float, gamma: float, eta: float,
                    n: int, tau_x: float | None = None, tau_y: float | None = None) -> EfcgtConstants:
    delta = contractive_delta(profile)
    for name, alpha in (("alpha_x", alpha_x), ("alpha_y", alpha_y)):
        if not 0 < alpha <= 1:
            raise AnalysisError(f"{name}={alpha!r} outside (0, 1]")
    tau_x = _tau_default(alpha_x * delta) if tau_x is None else tau_x
    tau_y = _tau_default(alpha_y * delta) if tau_y is None else tau_y
    if tau_x <= 1 or tau_y <= 1:
        raise AnalysisError("slack parameters tau must exceed 1")
    d_x = tau_x * (1.0 - alpha_x * delta)
    d_y = tau_y * (1.0 - alpha_y * delta)
    if d_x >= 1.0 or d_y >= 1.0:
        raise AnalysisError(f"infeasible: d_x={d_x!r}, d_y={d_y!r} must be < 1")
    t_x = 3.0 * tau_x / (tau_x - 1.0)
    t_y = 3.0 * tau_y / (tau_y - 1.0)
    s, niw = spec.s, spec.norm_IminusW
    return EfcgtConstants(
        n=n, mu=prob.mu, L=prob.L, s=s, norm_IminusW=niw, delta=delta,
        alpha_x=alpha_x, alpha_y=alpha_y, gamma=gamma, eta=eta, tau_x=tau_x, tau_y=tau_y,
        d1=2.0 / s,
        d2=2.0 / s * niw**2,
        d3=t_x * niw**2,
        d4=t_y * niw**2,
        d_x=d_x, d_y=d_y, t_x=t_x, t_y=t_y,
    )


@dataclass(frozen=True)
class ErrorSystem:
    """Nonnegative transition matrix with its test vector and contraction target."""

    M: np.ndarray
    epsilon: np.ndarray
    theta: float
    gamma: float
    eta: float


def _check_eta_gamma(mu: float, L: float, gamma: float, eta: float) -> None:
    if not 0 < gamma <= 1:
        raise AnalysisError(f"gamma must be in (0, 1], got {gamma!r}")
    if eta <= 0:
        raise AnalysisError(f"eta must be positive, got {eta!r}")
    bound = min(2.0 / (mu + L), 1.0 / (3.0 * mu))
    if eta >= bound:
        which = "2/(mu+L)" if 2.0 / (mu + L) <= 1.0 / (3.0 * mu) else "1/(3 mu)"
        raise AnalysisError(f"eta={eta!r} violates eta < {which} = {bound!r}")


def build_A(c: CgtConstants, epsilon: np.ndarray | None = None) -> ErrorSystem:
    """5x5 transition matrix for plain compressed gradient tracking.

    Row/column order: optimization, consensus, tracking, x-compression,
    y-compression errors.
    """
    _check_eta_gamma(c.mu, c.L, c.gamma, c.eta)
    g, e, L, n = c.gamma, c.eta, c.L, c.n
    rt2 = c.rho_tilde**2
    m = np.array([
        [1.0 - 1.5 * e * c.mu, 3.0 * e * L**2 / (c.mu * n), 0.0, 0.0, 0.0],
        [0.0, (1.0 + rt2) / 2.0, c.c1 * e**2 / g, c.c2 * g, 0.0],
        [n * c.c3 * L**2 * e**2 / g, c.c3 * L**2 * e**2 / g + c.c4 * L**2 * g,
         (1.0 + rt2) / 2.0 + 0.5 * c.c3 * e**2 / g, 3.0 * c.c2 * L**2 * g, c.c2 * g],
        [2.0 * n * c.t_x * L**2 * e**2, c.c5 * g**2 + 2.0 * c.t_x * L**2 * e**2,
         c.t_x * e**2, c.c_x + c.c6 * g**2, 0.0],
        [6.0 * n * c.t_y * L**4 * e**2, 3.0 * c.c8 * L**2 * g**2 + 6.0 * c.t_y * L**4 * e**2,
         3.0 * c.t_y * L**2 * e**2 + c.c8 * g**2, 3.0 * c.c7 * L**2 * g**2,
         c.c_y + c.c7 * g**2],
    ])
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise AnalysisError("transition matrix has negative or non-finite entries")
    eps = np.ones(5) if epsilon is None else np.asarray(epsilon, dtype=float)
    return ErrorSystem(M=m, epsilon=eps, theta=1.0 - 0.5 * c.eta * c.mu,
                       gamma=c.gamma, eta=c.eta)


def build_B(c: EfcgtConstants, epsilon: np.ndarray | None = None) -> ErrorSystem:
    """7x7 transition matrix with error feedback.

    Rows 1-5 as in :func:`build_A`; rows 6-7 are the x/y error-feedback
    accumulators with self-coupling 1 - delta/2.
    """
    _check_eta_gamma(c.mu, c.L, c.gamma, c.eta)
    if not 0 < c.delta <= 1:
        raise AnalysisError(f"delta must be in (0, 1], got {c.delta!r}")
    g, e, L, n, dl = c.gamma, c.eta, c.L, c.n, c.delta
    rt2 = c.rho_tilde**2
    m = np.array([
        [1.0 - 1.5 * e * c.mu, 3.0 * e * L**2 / (c.mu * n), 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, (1.0 + rt2) / 2.0, c.d1 * e**2 / g, c.d2 * g, 0.0,
         6.0 * c.d2 / dl * g, 0.0],
        [6.0 * n * c.d1 * L**4 * e**2 / g, 3.0 * c.d2 * L**2 * g + 6.0 * c.d1 * L**4 * e**2 / g,
         (1.0 + rt2) / 2.0 + 3.0 * c.d1 * L**2 * e**2 / g, 3.0 * c.d2 * L**2 * g, c.d2 * g,
         18.0 * c.d2 / dl * L**2 * g, 6.0 * c.d2 / dl * g],
        [2.0 * n * c.t_x * L**2 * e**2, c.d3 * g**2 + 2.0 * c.t_x * L**2 * e**2,
         c.t_x * e**2, c.d_x + c.d3 * g**2, 0.0, 6.0 * c.d3 / dl * g**2, 0.0],
        [6.0 * n * c.t_y * L**4 * e**2, 3.0 * c.t_y * L**2 * g**2 + 6.0 * c.t_y * L**4 * e**2,
         3.0 * c.t_y * L**2 * e**2 + c.d4 * g**2, 3.0 * c.d4 * L**2 * g**2,
         c.d_y + c.d4 * g**2, 18.0 * c.d4 / dl * L**2 * g**2, 6.0 * c.d4 / dl * g**2],
        [0.0, 0.0, 0.0, 2.0 * (1.0 - dl) / dl, 0.0, 1.0 - dl / 2.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 2.0 * (1.0 - dl) / dl, 0.0, 1.0 - dl / 2.0],
    ])
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise AnalysisError("transition matrix has negative or non-finite entries")
    eps = np.ones(7) if epsilon is None else np.asarray(epsilon, dtype=float)
    return ErrorSystem(M=m, epsilon=eps, theta=1.0 - 0.5 * c.eta * c.mu,
                       gamma=c.gamma, eta=c.eta)


@dataclass(frozen=True)
class Certificate:
    rho_M: float
    componentwise_ok: bool
    theta: float
    gamma: float
    eta: float
    epsilon: np.ndarray

    @property
    def ok(self) -> bool:
        return self.componentwise_ok

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"verdict = {'certified' if self.componentwise_ok else 'not-certified'}\n")
        out.write(f"rho = {self.rho_M:.17g}\n")
        out.write(f"theta = {self.theta:.17g}\n")
        out.write(f"gamma = {self.gamma:.17g}\n")
        out.write(f"eta = {self.eta:.17g}\n")
        out.write("epsilon = " + " ".join(f"{x:.17g}" for x in self.epsilon) + "\n")
        return out.getvalue()


def spectral_radius(m: np.ndarray, tol: float = 1e-12, max_squarings: int = 60) -> float:
    """Spectral radius of a nonnegative matrix via norm growth of matrix powers.

    Repeated squaring with norm scaling evaluates ||M^(2^j)||^(1/2^j), which
    converges to the radius from above.  Plain vector power iteration stalls
    on these transition matrices: their leading eigenvalues cluster within
    ~eta*mu of each other and the matrices are far from normal, so the
    iterate's norm ratio overshoots the radius for any practical iteration
    budget.  The norm-growth form resolves the radius to near machine
    precision because the 2^j-th root washes out the transient.
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise AnalysisError("spectral radius routine expects a nonnegative matrix")
    acc = 0.0
    est = math.inf
    cur = m.copy()
    for j in range(max_squarings):
        nrm = float(np.linalg.norm(cur))
        if nrm == 0.0:
            return 0.0
        acc += math.log(nrm) / (2.0 ** j)
        new_est = math.exp(acc)
        if j > 0 and abs(new_est - est) <= tol * max(1.0, new_est):
            return new_est
        est = new_est
        cur = cur / nrm
        cur = cur @ cur
    return est


def certify(system: ErrorSystem, slack: float = 1e-12) -> Certificate:
    """Spectral radius plus the componentwise test M eps <= theta eps."""
    eps = system.epsilon
    if np.any(eps <= 0):
        raise AnalysisError("test vector must be strictly positive")
    lhs = system.M @ eps
    rhs = system.theta * eps
    ok = bool(np.all(lhs <= rhs + slack * (1.0 + eps)))
    rho = spectral_radius(system.M)
    return Certificate(rho_M=rho, componentwise_ok=ok, theta=system.theta,
                       gamma=system.gamma, eta=system.eta, epsilon=eps)


# ---------------------------------------------------------------------------
# sufficient parameter chains

_SLACK = 1.01


@dataclass(frozen=True)
class SufficientParams:
    """Certified (epsilon, gamma, eta) triple plus the system they certify."""

    epsilon: np.ndarray       # raw chain values
    test_vector: np.ndarray   # epsilon with the L^2 weights used by the certificate
    gamma: float
    eta: float
    system: ErrorSystem
    certificate: Certificate

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("epsilon-chain = " + " ".join(f"{x:.17g}" for x in self.epsilon) + "\n")
        out.write(self.certificate.to_text())
        return out.getvalue()


def sufficient_params(prob: ProblemConstants, spec: SpectralInfo, profile: CompressorProfile,
                      alpha_x: float, alpha_y: float, n: int,
                      tau_x: float | None = None, tau_y: float | None = None) -> SufficientParams:
    """Forward-substitute a positive test vector, then gamma and eta, and certify.

    The chain fixes the two compression components to 1, bounds the consensus
    component from the compression coupling, the tracking component from the
    mixing terms, and the optimization component from the condition number;
    each lower bound is inflated by 1% so every inequality holds strictly.
    """
    probe = cgt_constants(prob, spec, profile, alpha_x, alpha_y,
                          gamma=1.0, eta=min(1.0 / (3.0 * prob.mu), 2.0 / (prob.mu + prob.L)) / 2,
                          n=n, tau_x=tau_x, tau_y=tau_y)
    kappa = prob.kappa
    s = probe.s
    e4 = 1.0
    e5 = 1.0
    e2 = _SLACK * max(2.0 * probe.c1 * probe.c2 * e4, e4)
    m2 = probe.c4 * e2 + probe.c2 * (3.0 * e4 + e5)
    e3 = max(_SLACK * 4.0 * m2 / s, e4)  # floor keeps the test vector positive
    e1 = _SLACK * 3.0 * kappa**2 * e2 / n
    m1 = probe.c3 * (n * e1 + e2 + 0.5 * e3)
    m3 = probe.t_x * (2 * n * e1 + 2 * e2 + e3) + probe.c5 * e2 + probe.c6 * e4 + e4 / (2 * kappa)
    m4 = (3 * probe.t_y * (2 * n * e1 + 2 * e2 + e3) + 3 * probe.c8 * e2 + probe.c8 * e3
          + 3 * probe.c7 * e4 + probe.c7 * e5 + e5 / (2 * kappa))
    gamma = min(1.0, (1.0 - probe.c_x) / m3 * e4, (1.0 - probe.c_y) / m4 * e5)
    eta = min(s * e2 / (4 * kappa * e3),
              s * e3 / (12 * kappa * (2 * n * e1 + 2 * e2 + e3))) * gamma / prob.L
    eta = min(eta, 0.99 * min(2.0 / (prob.mu + prob.L), 1.0 / (3.0 * prob.mu)))
    consts = cgt_constants(prob, spec, profile, alpha_x, alpha_y, gamma, eta,
                           n=n, tau_x=tau_x, tau_y=tau_y)
    eps = np.array([e1, e2, e3, e4, e5])
    test_vec = np.array([e1, e2, prob.L**2 * e3, e4, prob.L**2 * e5])
    system = build_A(consts, epsilon=test_vec)
    cert = certify(system)
    if not cert.componentwise_ok:
        raise AnalysisError("sufficient-parameter chain failed its own certificate")
    return SufficientParams(epsilon=eps, test_vector=test_vec, gamma=gamma, eta=eta,
                            system=system, certificate=cert)


def sufficient_params_ef(prob: ProblemConstants, spec: SpectralInfo, profile: CompressorProfile,
                         alpha_x: float, alpha_y: float, n: int,
                         tau_x: float | None = None, tau_y: float | None = None) -> SufficientParams:
    """Error-feedback analogue of :func:`sufficient_params` with a 7-component chain."""
    probe = efcgt_constants(prob, spec, profile, alpha_x, alpha_y,
                            gamma=1.0, eta=min(1.0 / (3.0 * prob.mu), 2.0 / (prob.mu + prob.L)) / 2,
                            n=n, tau_x=tau_x, tau_y=tau_y)
    kappa = prob.kappa
    s, dl = probe.s, probe.delta
    e4 = 1.0
    e5 = 1.0
    e6 = max(_SLACK * 8.0 * (1.0 - dl) * e4 / dl**2, 1e-2 * e4)
    e7 = max(_SLACK * 8.0 * (1.0 - dl) * e5 / dl**2, 1e-2 * e5)
    e2 = _SLACK * max(4.0 * probe.d1 * probe.d2 * e4, 24.0 * probe.d1 * probe.d2 * e6 / dl, e4)
    m2 = (3 * probe.d2 * e2 + 3 * probe.d2 * e4 + probe.d2 * e5
          + 18 * probe.d2 / dl * e6 + 6 * probe.d2 / dl * e7)
    e3 = max(_SLACK * 4.0 * m2 / s, e4)
    e1 = _SLACK * 3.0 * kappa**2 * e2 / n
    m3 = (2 * n * probe.t_x * e1 + 2 * probe.t_x * e2 + probe.t_x * e3
          + probe.d3 * e2 + probe.d3 * e4 + 6 * probe.d3 / dl * e6 + e4 / (2 * kappa))
    m4 = (6 * n * probe.t_y * e1 + 6 * probe.t_y * e2 + 3 * probe.t_y * e3
          + 3 * probe.t_y * e2 + probe.d4 * e3 + 3 * probe.d4 * e4 + probe.d4 * e5
          + 18 * probe.d4 / dl * e6 + 6 * probe.d4 / dl * e7 + e5 / (2 * kappa))
    gamma = min(1.0, (1.0 - probe.d_x) / m3 * e4, (1.0 - probe.d_y) / m4 * e5)
    eta = min(s * e3 / (6 * kappa * (2 * n * e1 + 2 * e2 + e3)) * gamma / prob.L,
              s * e2 / (4 * kappa * e3) * gamma / prob.L,
              dl / (2 * prob.mu))
    eta = min(eta, 0.99 * min(2.0 / (prob.mu + prob.L), 1.0 / (3.0 * prob.mu)))
    consts = efcgt_constants(prob, spec, profile, alpha_x, alpha_y, gamma, eta,
                             n=n, tau_x=tau_x, tau_y=tau_y)
    eps = np.array([e1, e2, e3, e4, e5, e6, e7])
    L2 = prob.L**2
    test_vec = np.array([e1, e2, L2 * e3, e4, L2 * e5, e6, L2 * e7])
    system = build_B(consts, epsilon=test_vec)
    cert = certify(system)
    if not cert.componentwise_ok:
        raise AnalysisError("sufficient-parameter chain failed its own certificate")
    return SufficientParams(epsilon=eps, test_vector=test_vec, gamma=gamma, eta=eta,
                            system=system, certificate=cert)


# ---------------------------------------------------------------------------
# empirical rate fitting

@dataclass(frozen=True)
class RateFit:
    rate: float
    r_squared: float
    k_range: tuple[int, int]


def empirical_rate(trace, burn_frac: float = 0.1) -> RateFit:
    """Per-iteration contraction factor from a log-linear fit of the residuals.

    Discards the first ``burn_frac`` of the trace, truncates at the last
    positive residual, and fits log(residual) against the iteration index.
    """
    ks = np.array([t.k for t in trace], dtype=float)
    rs = np.array([t.residual for t in trace], dtype=float)
    if ks.size < 3:
        raise AnalysisError("need at least 3 trace points to fit a rate")
    start = int(math.ceil(burn_frac * ks.size))
    ks, rs = ks[start:], rs[start:]
    positive = rs > 1e-300
    if not positive.all():
        cut = int(np.argmin(positive))  # first nonpositive/denormal entry
        ks, rs = ks[:cut], rs[:cut]
    if ks.size < 2:
        raise AnalysisError("not enough positive residuals in the fit window")
    logs = np.log(rs)
    slope, intercept = np.polyfit(ks, logs, 1)
    fitted = slope * ks + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-20 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RateFit(rate=float(np.exp(slope)), r_squared=r2,
                   k_range=(int(ks[0]), int(ks[-1])))
