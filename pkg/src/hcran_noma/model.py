"""System model: topology, channels, powers, rates, energy efficiency.

Conventions used throughout the package:

* RRH index 0 is the high-power tier node; indices 1..m_f are the low-power
  remote radio heads.  Architectures without a genuine HPN reuse slot 0 with
  reinterpreted static-power constants.
* All powers are linear watts (dBm inputs are converted at config build).
* Arrays are indexed [m, k, n] = (RRH, user, subcarrier).
* Rates are bits/s/Hz per subcarrier; the sum rate is therefore a
  bandwidth-normalized quantity and energy efficiency is rate per watt.

Superposition decoding rule: on a given (m, n), a user is interfered by
same-RRH users with *stronger* channels (their signals cannot be cancelled)
and by every user of every other RRH.  Channel ties are broken by user index
(lower index counts as stronger) so the decode order is a strict total order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .traffic import TrafficSpec

LN2 = float(np.log(2.0))


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    return 10.0 * np.log10(w) + 30.0


class ConfigError(ValueError):
    """Raised when a configuration violates a structural invariant."""


@dataclass(frozen=True)
class UserSpec:
    """One user: service class, planar position, and (for streaming) traffic."""

    kind: str  # "elastic" | "streaming"
    position: tuple[float, float]  # meters
    traffic: TrafficSpec | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("elastic", "streaming"):
            raise ConfigError(f"unknown user kind {self.kind!r}")
        if self.kind == "streaming" and self.traffic is None:
            raise ConfigError("streaming users need a TrafficSpec")
        if self.kind == "elastic" and self.traffic is not None:
            raise ConfigError("elastic users carry no TrafficSpec")


@dataclass(frozen=True)
class Tolerances:
    """Solver stopping rules and constraint slacks.

    rho1/rho2 are the slack levels of the product-form selection constraints
    (one RRH per user; at most l_max users per subcarrier).  When left None
    they are derived from the spectral mask: 1e-6 * max_mask^2 for the pair
    products and 1e-6 * max_mask^(l_max+1) for the tuple products.
    """

    xi: float = 0.01          # fractional-programming stop on the surplus
    varpi1_rel: float = 1e-4  # inner power-sweep stop, relative to max p_max
    varpi2_rel: float = 1e-3  # convex-approximation round stop, same scale
    s_max: int = 20           # max approximation refresh rounds
    v_max: int = 120          # max power/dual sweeps per round
    outer_max: int = 30       # max fractional-programming iterations
    rho1: float | None = None
    rho2: float | None = None
    dual_cap: float = 1e8     # multiplier divergence -> infeasibility flag
    c13_rate_tol: float = 1e-6  # bits/s/Hz band on min-rate feasibility
    c14_rel_tol: float = 1e-9   # relative band on the SIC margin products
    box_rel_tol: float = 1e-9   # relative band on mask/budget checks


@dataclass(frozen=True)
class NetworkConfig:
    """Static topology, budgets, traffic and solver tolerances.

    p_max, eta are per RRH; p_mask is per (m, k, n).  Fiber/circuit constants
    are split by tier: slot 0 uses the *_hpn values, slots 1..m_f the *_lpn
    values.  weights w[m, k] in [0, 1] scale each user's rate contribution.
    """

    m_f: int
    n_subcarriers: int
    subcarrier_bandwidth: float  # Hz
    users: tuple[UserSpec, ...]
    l_max: int
    p_max: np.ndarray      # (M,) W
    p_mask: np.ndarray     # (M, K, N) W
    eta: np.ndarray        # (M,) amplifier inefficiency multipliers
    p_fiber_lpn: float     # W
    p_fiber_hpn: float     # W
    p_circuit_lpn: float   # W
    p_circuit_hpn: float   # W
    weights: np.ndarray    # (M, K)
    rrh_positions: np.ndarray  # (M, 2) meters
    noise_density: float = dbm_to_watts(-174.0)  # W/Hz
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self) -> None:
        m, k, n = self.n_rrh, self.n_users, self.n_subcarriers
        if self.m_f < 0 or n <= 0 or k <= 0:
            raise ConfigError("need at least one RRH, user and subcarrier")
        if self.l_max < 1:
            raise ConfigError("l_max must be >= 1")
        if self.subcarrier_bandwidth <= 0 or self.noise_density <= 0:
            raise ConfigError("bandwidth and noise density must be positive")
        for name, arr, shape in (
            ("p_max", self.p_max, (m,)),
            ("p_mask", self.p_mask, (m, k, n)),
            ("eta", self.eta, (m,)),
            ("weights", self.weights, (m, k)),
            ("rrh_positions", self.rrh_positions, (m, 2)),
        ):
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
        if np.any(self.p_max <= 0) or np.any(self.p_mask <= 0) or np.any(self.eta <= 0):
            raise ConfigError("powers and efficiencies must be strictly positive")
        if np.any(self.p_mask > self.p_max[:, None, None] * (1 + 1e-12)):
            raise ConfigError("p_mask must not exceed the per-RRH budget")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ConfigError("weights must lie in [0, 1]")
        tol = self.tolerances
        if (tol.rho1 is not None and tol.rho1 <= 0) or (tol.rho2 is not None and tol.rho2 <= 0):
            raise ConfigError("rho1 and rho2 must be positive")

    # -- derived sizes ----------------------------------------------------
    @property
    def n_rrh(self) -> int:
        return self.m_f + 1

    @property
    def n_users(self) -> int:
        return len(self.users)

    def elastic_users(self) -> list[int]:
        return [i for i, u in enumerate(self.users) if u.kind == "elastic"]

    def streaming_users(self) -> list[int]:
        return [i for i, u in enumerate(self.users) if u.kind == "streaming"]

    def elastic_mask(self) -> np.ndarray:
        return np.array([u.kind == "elastic" for u in self.users], dtype=bool)

    @property
    def max_mask(self) -> float:
        return float(np.max(self.p_mask))

    @property
    def rho1(self) -> float:
        r = self.tolerances.rho1
        return r if r is not None else 1e-6 * self.max_mask**2

    @property
    def rho2(self) -> float:
        r = self.tolerances.rho2
        return r if r is not None else 1e-6 * self.max_mask ** (self.l_max + 1)

    @property
    def binarization_threshold(self) -> float:
        """Powers below this are treated as off when recovering indicators."""
        return 1e-6 * self.max_mask

    def static_power(self) -> float:
        """Fiber plus circuit floor; consumed regardless of transmit power."""
        return (self.p_fiber_hpn + self.m_f * self.p_fiber_lpn
                + self.m_f * self.p_circuit_lpn + self.p_circuit_hpn)

    def min_rates(self) -> np.ndarray:
        """Per-user minimum rate (bits/s/Hz); zero for elastic users."""
        from .traffic import min_rate_for_delay

        out = np.zeros(self.n_users)
        for k in self.streaming_users():
            out[k] = min_rate_for_delay(self.users[k].traffic, self.subcarrier_bandwidth)
        return out


@dataclass(frozen=True)
class ChannelState:
    """Linear channel power gains and noise powers, both (M, K, N)."""

    gamma: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        if self.gamma.shape != self.sigma.shape or self.gamma.ndim != 3:
            raise ConfigError("gamma and sigma must share an (M, K, N) shape")
        if np.any(self.gamma < 0):
            raise ConfigError("channel power gains must be non-negative")
        if np.any(self.sigma <= 0):
            raise ConfigError("noise powers must be strictly positive")


@dataclass
class PowerAllocation:
    """Continuous transmit powers plus (optionally) derived binary indicators."""

    p: np.ndarray                 # (M, K, N) W
    rho: np.ndarray | None = None  # (M, K, N) in {0, 1}
    a: np.ndarray | None = None    # (M, K) in {0, 1}

    def copy(self) -> "PowerAllocation":
        return PowerAllocation(
            p=self.p.copy(),
            rho=None if self.rho is None else self.rho.copy(),
            a=None if self.a is None else self.a.copy(),
        )


@dataclass(frozen=True)
class EnergyReport:
    sum_rate: float     # weighted elastic bits/s/Hz
    total_power: float  # W
    ee: float           # rate per watt


def zeros_like_alloc(cfg: NetworkConfig) -> PowerAllocation:
    return PowerAllocation(p=np.zeros((cfg.n_rrh, cfg.n_users, cfg.n_subcarriers)))


# ---------------------------------------------------------------------------
# decode-order helpers
# ---------------------------------------------------------------------------

def stronger_mask(gamma: np.ndarray) -> np.ndarray:
    """Boolean (M, K, K, N): entry [m, i, k, n] is True when user i's signal
    interferes with user k on (m, n), i.e. i has the strictly stronger channel
    (ties resolved toward the lower user index)."""
    gi = gamma[:, :, None, :]  # i axis
    gk = gamma[:, None, :, :]  # k axis
    k_count = gamma.shape[1]
    idx = np.arange(k_count)
    earlier = (idx[:, None] < idx[None, :])[None, :, :, None]
    return (gi > gk) | ((gi == gk) & earlier)


def oriented_pairs(gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orient every unordered user pair by the decode order on each (m, n).

    Returns (strong_idx, weak_idx), both (M, P, N) with P = K*(K-1)/2: row p
    of strong_idx holds the pair member whose signal the other cannot cancel.
    """
    m_count, k_count, n_count = gamma.shape
    pairs = [(i, j) for i in range(k_count) for j in range(i + 1, k_count)]
    if not pairs:
        empty = np.zeros((m_count, 0, n_count), dtype=np.int64)
        return empty, empty.copy()
    arr = np.array(pairs, dtype=np.int64)
    strong = stronger_mask(gamma)
    a_strong = strong[:, arr[:, 0], arr[:, 1], :]  # (M, P, N)
    a = arr[:, 0][None, :, None]
    b = arr[:, 1][None, :, None]
    strong_idx = np.where(a_strong, a, b)
    weak_idx = np.where(a_strong, b, a)
    return strong_idx, weak_idx


def cross_interference(p: np.ndarray, ch: ChannelState) -> np.ndarray:
    """(M, K, N): total power received at user k (channel of RRH m) from all
    users of every other RRH on the same subcarrier."""
    totals = p.sum(axis=1)  # (M, N) per-RRH transmit total
    # all-RRH contribution at user k through each origin's channel, minus own RRH
    full = np.einsum("jn,jkn->kn", totals, ch.gamma)
    return full[None, :, :] - totals[:, None, :] * ch.gamma


def interference(p: np.ndarray, ch: ChannelState,
                 stronger: np.ndarray | None = None) -> np.ndarray:
    """(M, K, N) interference floor: same-RRH stronger users received through
    the victim's own channel, plus everything from other RRHs."""
    if stronger is None:
        stronger = stronger_mask(ch.gamma)
    same_power = np.einsum("mikn,min->mkn", stronger, p)
    return ch.gamma * same_power + cross_interference(p, ch)


def sinr_array(p: np.ndarray, ch: ChannelState,
               stronger: np.ndarray | None = None) -> np.ndarray:
    """(M, K, N) post-cancellation SINR."""
    return p * ch.gamma / (ch.sigma + interference(p, ch, stronger))


def rate_array(p: np.ndarray, ch: ChannelState,
               stronger: np.ndarray | None = None) -> np.ndarray:
    """(M, K, N) Shannon rates log2(1 + SINR), bits/s/Hz."""
    return np.log2(1.0 + sinr_array(p, ch, stronger))


def _check_index(name: str, value: int, bound: int) -> None:
    if not 0 <= value < bound:
        raise IndexError(f"{name}={value} out of range [0, {bound})")


def sinr(alloc: PowerAllocation, ch: ChannelState, m: int, k: int, n: int) -> float:
    """Post-cancellation SINR of user k on subcarrier n served by RRH m."""
    mm, kk, nn = ch.gamma.shape
    _check_index("m", m, mm)
    _check_index("k", k, kk)
    _check_index("n", n, nn)
    if np.any(alloc.p < 0):
        raise ValueError("allocation contains negative powers")
    return float(sinr_array(alloc.p, ch)[m, k, n])


def user_rate(alloc: PowerAllocation, ch: ChannelState, m: int, k: int, n: int) -> float:
    """Rate of user k on subcarrier n in RRH m, bits/s/Hz."""
    return float(np.log2(1.0 + sinr(alloc, ch, m, k, n)))


def per_user_rate(alloc: PowerAllocation, ch: ChannelState, cfg: NetworkConfig) -> np.ndarray:
    """(K,) weighted total rate of each user across RRHs and subcarriers."""
    rates = rate_array(alloc.p, ch)
    return np.einsum("mk,mkn->k", cfg.weights, rates)


def weighted_sum_rate(alloc: PowerAllocation, ch: ChannelState, cfg: NetworkConfig) -> float:
    """Weighted sum rate over the elastic users only (the efficiency numerator)."""
    rates = per_user_rate(alloc, ch, cfg)
    return float(rates[cfg.elastic_mask()].sum())


def total_power(alloc: PowerAllocation, cfg: NetworkConfig) -> float:
    """Static fiber+circuit floor plus amplifier draw of the elastic users' power."""
    dyn = alloc.p[:, cfg.elastic_mask(), :].sum(axis=(1, 2))
    return cfg.static_power() + float(np.dot(cfg.eta, dyn))


def energy_efficiency(alloc: PowerAllocation, ch: ChannelState, cfg: NetworkConfig) -> EnergyReport:
    rate = weighted_sum_rate(alloc, ch, cfg)
    power = total_power(alloc, cfg)
    return EnergyReport(sum_rate=rate, total_power=power, ee=rate / power)


def sic_margin(alloc: PowerAllocation, ch: ChannelState,
               m: int, k: int, k_prime: int, n: int) -> float:
    """Signed margin of the cancellation-order condition for the pair
    (k stronger, k_prime weaker) on (m, n).  Non-positive means user k can
    decode and strip k_prime's signal before its own.

    Margin = G_k' * sigma_k - G_k * sigma_k' + G_k' * C_k - G_k * C_k'
    with C_x the cross-RRH interference received at user x.
    """
    mm, kk, nn = ch.gamma.shape
    _check_index("m", m, mm)
    _check_index("k", k, kk)
    _check_index("k_prime", k_prime, kk)
    _check_index("n", n, nn)
    if k == k_prime:
        raise ValueError("k and k_prime must differ")
    strong = stronger_mask(ch.gamma)
    if not strong[m, k, k_prime, n]:
        raise ValueError(
            f"decode-order precondition violated: user {k} is not stronger "
            f"than user {k_prime} on (m={m}, n={n})"
        )
    cross = cross_interference(alloc.p, ch)
    g_k = ch.gamma[m, k, n]
    g_kp = ch.gamma[m, k_prime, n]
    return float(
        g_kp * ch.sigma[m, k, n] - g_k * ch.sigma[m, k_prime, n]
        + g_kp * cross[m, k, n] - g_k * cross[m, k_prime, n]
    )


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    constraint: str       # "C4", "C10", "C11", "C12", "C13", "C14"
    index: tuple
    magnitude: float      # positive amount by which the constraint is broken


@dataclass
class FeasibilityReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_constraint(self, name: str) -> list[Violation]:
        return [v for v in self.violations if v.constraint == name]

    def __repr__(self) -> str:  # compact: tests print these on failure
        if self.ok:
            return "FeasibilityReport(ok)"
        worst = sorted(self.violations, key=lambda v: -v.magnitude)[:5]
        return f"FeasibilityReport({len(self.violations)} violations; worst={worst})"


def check_feasibility(alloc: PowerAllocation, ch: ChannelState, cfg: NetworkConfig,
                      streaming_min_rates: np.ndarray | None = None) -> FeasibilityReport:
    """Collect violations of the continuous problem's constraints.

    C4   0 <= p <= mask (exact up to float slack)
    C10  cross-RRH power products of one user stay below rho1
    C11  products over any l_max+1 users on one (m, n) stay below rho2
    C12  per-RRH power budget
    C13  streaming users meet their minimum rates
    C14  active NOMA pairs keep a valid cancellation order

    streaming_min_rates defaults to the delay-induced thresholds from the
    config's traffic specs.
    """
    tol = cfg.tolerances
    p = alloc.p
    out: list[Violation] = []

    # C4: spectral mask box
    over = p - cfg.p_mask * (1 + tol.box_rel_tol)
    for m, k, n in zip(*np.nonzero(over > 0)):
        out.append(Violation("C4", (int(m), int(k), int(n)), float(over[m, k, n])))
    if np.any(p < 0):
        for m, k, n in zip(*np.nonzero(p < 0)):
            out.append(Violation("C4", (int(m), int(k), int(n)), float(-p[m, k, n])))

    # C10: one user must not carry real power on two RRHs
    m_count, k_count, n_count = p.shape
    if m_count > 1:
        flat = np.transpose(p, (1, 0, 2)).reshape(k_count, m_count * n_count)
        prod = flat[:, :, None] * flat[:, None, :]  # (K, M*N, M*N)
        same_rrh = np.repeat(np.arange(m_count), n_count)
        cross_pairs = same_rrh[:, None] != same_rrh[None, :]
        viol = (prod > cfg.rho1) & cross_pairs
        for k in range(k_count):
            if not viol[k].any():
                continue
            i, j = np.unravel_index(np.argmax(np.where(viol[k], prod[k], -np.inf)),
                                    prod[k].shape)
            out.append(Violation(
                "C10",
                (int(k), int(same_rrh[i]), int(i % n_count), int(same_rrh[j]), int(j % n_count)),
                float(prod[k, i, j] - cfg.rho1),
            ))

    # C11: at most l_max users with real power per (m, n); equivalently the
    # product of the top l_max+1 powers stays below rho2.
    ell = cfg.l_max + 1
    if k_count >= ell:
        top = np.sort(p, axis=1)[:, -ell:, :]  # (M, ell, N) largest powers
        prod11 = top.prod(axis=1)
        for m, n in zip(*np.nonzero(prod11 > cfg.rho2)):
            users = tuple(int(u) for u in np.argsort(p[m, :, n])[-ell:])
            out.append(Violation("C11", (int(m), int(n)) + users,
                                 float(prod11[m, n] - cfg.rho2)))

    # C12: per-RRH budget
    sums = p.sum(axis=(1, 2))
    for m in np.nonzero(sums > cfg.p_max * (1 + tol.box_rel_tol))[0]:
        out.append(Violation("C12", (int(m),), float(sums[m] - cfg.p_max[m])))

    # C13: streaming minimum rates
    if streaming_min_rates is None:
        streaming_min_rates = cfg.min_rates()
    rates = per_user_rate(alloc, ch, cfg)
    for k in cfg.streaming_users():
        deficit = streaming_min_rates[k] - rates[k]
        if deficit > tol.c13_rate_tol:
            out.append(Violation("C13", (int(k),), float(deficit)))

    # C14: cancellation order on active pairs, normalized by the term scale so
    # the band is dimensionless.
    strong = stronger_mask(ch.gamma)
    cross = cross_interference(p, ch)
    g_i = ch.gamma[:, :, None, :]
    g_j = ch.gamma[:, None, :, :]
    s_i = ch.sigma[:, :, None, :]
    s_j = ch.sigma[:, None, :, :]
    c_i = cross[:, :, None, :]
    c_j = cross[:, None, :, :]
    omega = g_j * s_i - g_i * s_j + g_j * c_i - g_i * c_j   # [m, i=strong, j=weak, n]
    scale = g_j * s_i + g_i * s_j + g_j * c_i + g_i * c_j
    pair_power = p[:, :, None, :] * p[:, None, :, :]
    lhs = pair_power * omega
    band = tol.c14_rel_tol * pair_power * scale
    viol14 = strong & (lhs > band) & (pair_power > 0)
    for m, i, j, n in zip(*np.nonzero(viol14)):
        out.append(Violation("C14", (int(m), int(i), int(j), int(n)),
                             float(lhs[m, i, j, n])))

    return FeasibilityReport(out)


def derive_binaries(alloc: PowerAllocation, cfg: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Recover the subcarrier indicator rho[m,k,n] and the RRH selection
    a[m,k] from a continuous allocation.

    a marks, per user, the RRH carrying its largest total power (none when all
    RRHs are effectively off).  rho marks, per (m, n), the up-to-l_max largest
    powers above the binarization threshold.  The result always satisfies
    sum_k rho <= l_max and sum_m a <= 1.
    """
    p = alloc.p
    eps = cfg.binarization_threshold
    m_count, k_count, n_count = p.shape

    a = np.zeros((m_count, k_count), dtype=np.uint8)
    per_rrh = p.sum(axis=2)  # (M, K)
    best = np.argmax(per_rrh, axis=0)
    on = per_rrh[best, np.arange(k_count)] > eps
    a[best[on], np.nonzero(on)[0]] = 1

    rho = np.zeros_like(p, dtype=np.uint8)
    order = np.argsort(p, axis=1)[:, ::-1, :]  # users by descending power
    ranked = np.take_along_axis(p, order, axis=1)
    keep = (ranked > eps) & (np.arange(k_count)[None, :, None] < cfg.l_max)
    np.put_along_axis(rho, order, keep.astype(np.uint8), axis=1)
    return rho, a
