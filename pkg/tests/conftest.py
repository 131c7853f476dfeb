import numpy as np
import pytest

from swarmfield.env import EnvConfig, Hazard, UavState, WorldState


def make_world(positions, goals=None, hazards=(), starts=None, config=None, seed=0, **overrides):
    """Hand-built world; hazards are ``(center, radius)`` pairs or bare centers."""
    cfg = config or EnvConfig(n_uavs=len(positions), **overrides)
    positions = [np.asarray(p, dtype=float) for p in positions]
    goals = [np.asarray(g, dtype=float) for g in (goals or [p + np.array([3.0, 0, 0]) for p in positions])]
    starts = [np.asarray(s, dtype=float) for s in (starts or positions)]
    uavs = [UavState(id=i, p=p.copy(), p_start=s.copy(), p_end=g.copy(), v=np.zeros(3))
            for i, (p, s, g) in enumerate(zip(positions, starts, goals))]
    haz = []
    for h in hazards:
        if len(h) == 2 and np.ndim(h[0]) == 1:
            haz.append(Hazard(np.asarray(h[0], dtype=float), float(h[1])))
        else:
            haz.append(Hazard(np.asarray(h, dtype=float), cfg.rho_o))
    return WorldState(config=cfg, uavs=uavs, hazards=haz, rng=np.random.default_rng(seed))


@pytest.fixture
def world_factory():
    return make_world


def max_rel_grad_error(net, x, rng, coords_per_tensor=12, h=1e-5, floor=1e-6):
    """Largest relative gap between analytic and central-difference gradients.

    The scalar probed is ``sum(upstream * net(x))`` for a random upstream.
    A random subset of entries per tensor is checked, plus every input entry.
    """
    from swarmfield.nets import gradients

    out = net.forward(x)
    up = rng.normal(size=out.shape)

    def loss():
        return float(np.sum(up * net.forward(x)))

    grads, dx = gradients(net, x, up)
    worst = 0.0

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), floor)

    for p, g in zip(net.params(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in rng.choice(flat.size, size=min(coords_per_tensor, flat.size), replace=False):
            old = flat[k]
            flat[k] = old + h
            lp = loss()
            flat[k] = old - h
            lm = loss()
            flat[k] = old
            worst = max(worst, rel(gflat[k], (lp - lm) / (2 * h)))
    xf = np.array(x, dtype=float)
    flat_x, flat_dx = xf.reshape(-1), np.asarray(dx).reshape(-1)
    for k in range(flat_x.size):
        old = flat_x[k]
        flat_x[k] = old + h
        lp = float(np.sum(up * net.forward(xf)))
        flat_x[k] = old - h
        lm = float(np.sum(up * net.forward(xf)))
        flat_x[k] = old
        worst = max(worst, rel(flat_dx[k], (lp - lm) / (2 * h)))
    return worst


ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
