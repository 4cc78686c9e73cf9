import numpy as np
import pytest

from hcran_noma.model import (ChannelState, NetworkConfig, Tolerances, UserSpec)
from hcran_noma.traffic import TrafficSpec


def make_config(m=2, k=3, n=2, streaming=(), l_max=3, p_max=None, eta=None,
                bandwidth=31250.0, arrival=125.0, queue=25.0, bits=1024.0,
                weights=None, tolerances=None):
    """Hand-built small network for unit tests (positions on a line)."""
    traffic = TrafficSpec.from_queue(queue, arrival, bits)
    users = tuple(
        UserSpec(kind="streaming" if i in streaming else "elastic",
                 position=(100.0 * (i + 1), 50.0),
                 traffic=traffic if i in streaming else None)
        for i in range(k))
    p_max = np.asarray(p_max if p_max is not None else [2.0] * m, dtype=float)
    mask = np.broadcast_to((p_max / n)[:, None, None], (m, k, n)).copy()
    return NetworkConfig(
        m_f=m - 1,
        n_subcarriers=n,
        subcarrier_bandwidth=bandwidth,
        users=users,
        l_max=l_max,
        p_max=p_max,
        p_mask=mask,
        eta=np.asarray(eta if eta is not None else [2.0] * m, dtype=float),
        p_fiber_hpn=3.0, p_fiber_lpn=1.0,
        p_circuit_hpn=3.0, p_circuit_lpn=0.1,
        weights=(np.ones((m, k)) if weights is None
                 else np.asarray(weights, dtype=float)),
        rrh_positions=np.stack([np.array([300.0 * j, 0.0]) for j in range(m)]),
        tolerances=tolerances or Tolerances(),
    )


def make_channel(cfg, seed=0, gamma_scale=1e-7):
    """Random channel sized to the config; gains around a usable SNR range."""
    rng = np.random.default_rng(seed)
    shape = (cfg.n_rrh, cfg.n_users, cfg.n_subcarriers)
    gamma = rng.exponential(gamma_scale, size=shape)
    sigma = np.full(shape, cfg.noise_density * cfg.subcarrier_bandwidth)
    return ChannelState(gamma=gamma, sigma=sigma)


@pytest.fixture
def small_cfg():
    return make_config()


@pytest.fixture
def small_channel(small_cfg):
    return make_channel(small_cfg)
