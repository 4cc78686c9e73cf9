"""M/G/1 delay-to-rate transform for streaming users.

Each streaming user queues Poisson packet arrivals (rate ``lam`` pkt/s) and
must see an average system time below a delay bound ``t_max``.  For an M/G/1
queue this requirement induces an upper bound on the mean service time, which
in turn becomes a minimum physical-layer rate: the packet must fit through the
air interface fast enough.  The transform is closed form; no queue simulation
is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TrafficSpec:
    """Traffic characterization of one streaming user.

    lam          Poisson packet arrival rate, packets/s.
    t_max        average delay bound, seconds.
    packet_bits  mean packet size, bits.
    q_len        optional average queue length in packets; when given it must
                 be consistent with ``t_max = q_len / lam``.
    """

    lam: float
    t_max: float
    packet_bits: float
    q_len: float | None = None

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError(f"arrival rate must be positive, got {self.lam}")
        if self.t_max <= 0:
            raise ValueError(f"delay bound must be positive, got {self.t_max}")
        if self.packet_bits <= 0:
            raise ValueError(f"packet size must be positive, got {self.packet_bits}")
        if self.q_len is not None:
            implied = self.q_len / self.lam
            if not math.isclose(implied, self.t_max, rel_tol=1e-9):
                raise ValueError(
                    f"queue length {self.q_len} implies delay {implied}, "
                    f"but t_max={self.t_max}"
                )
        # disc = (2+2*lam*T)^2 - 8*lam*T = 4*(1+(lam*T)^2) is always positive;
        # assert the invariant anyway so a regression cannot pass silently.
        lt = self.lam * self.t_max
        assert (2.0 + 2.0 * lt) ** 2 - 8.0 * lt > 0.0

    @classmethod
    def from_queue(cls, q_len: float, lam: float, packet_bits: float) -> "TrafficSpec":
        """Build a spec from an average queue length, using t_max = q/lam."""
        return cls(lam=lam, t_max=max_delay_from_queue(q_len, lam),
                   packet_bits=packet_bits, q_len=q_len)


def max_delay_from_queue(q_len: float, lam: float) -> float:
    """Delay bound implied by an average queue length: t = q / lam."""
    if lam <= 0:
        raise ValueError(f"arrival rate must be positive, got {lam}")
    return q_len / lam


def delay_roots(lam: float, t_max: float) -> tuple[float, float]:
    """Roots of the mean-service-time quadratic lam*x^2 - (2+2*lam*T)*x + 2*T.

    Both roots are positive; the smaller one is the admissible upper bound on
    the mean service time (we want service faster than the queue drains).
    The smaller root is evaluated in the conjugate form 2*T/(1+lam*T+sqrt(...))
    to avoid the catastrophic cancellation of (b - sqrt(b^2 - c)) at large
    lam*T.
    """
    if lam <= 0 or t_max <= 0:
        raise ValueError("lam and t_max must be positive")
    lt = lam * t_max
    root = math.sqrt(1.0 + lt * lt)
    x_small = 2.0 * t_max / (1.0 + lt + root)
    x_large = (1.0 + lt + root) / lam
    return x_small, x_large


def min_rate_for_delay(spec: TrafficSpec, subcarrier_bandwidth: float) -> float:
    """Minimum rate (bits/s/Hz) that keeps an M/G/1 user within its delay bound.

    The mean service time of a packet of ``packet_bits`` bits at rate r*B is
    packet_bits/(r*B); requiring it to stay below the smaller delay root gives

        rate_hz = 2*lam*z / ((2+2*lam*T) - sqrt((2+2*lam*T)^2 - 8*lam*T))

    normalized by the subcarrier bandwidth.  Evaluated in conjugate form
    z*(1+lam*T+sqrt(1+(lam*T)^2)) / (2*T), which is algebraically identical
    and cancellation free.
    """
    if subcarrier_bandwidth <= 0:
        raise ValueError("subcarrier bandwidth must be positive")
    lt = spec.lam * spec.t_max
    rate_hz = spec.packet_bits * (1.0 + lt + math.sqrt(1.0 + lt * lt)) / (2.0 * spec.t_max)
    return rate_hz / subcarrier_bandwidth


@dataclass(frozen=True)
class DelayCheck:
    """Outcome of the delay validation for one streaming user."""

    user: int
    achieved_rate: float  # bits/s/Hz, weighted across serving RRHs
    required_rate: float  # bits/s/Hz
    ok: bool


def validate_delay(alloc, ch, cfg, rate_tol: float = 1e-9) -> list[DelayCheck]:
    """Check every streaming user's achieved rate against its delay-induced
    minimum rate.  The boundary is inclusive: rate == requirement passes.
    """
    from . import model  # local import; model depends on TrafficSpec

    rates = model.per_user_rate(alloc, ch, cfg)
    checks = []
    for k in cfg.streaming_users():
        spec = cfg.users[k].traffic
        required = min_rate_for_delay(spec, cfg.subcarrier_bandwidth)
        achieved = float(rates[k])
        checks.append(DelayCheck(user=k, achieved_rate=achieved,
                                 required_rate=required,
                                 ok=achieved >= required - rate_tol))
    return checks
