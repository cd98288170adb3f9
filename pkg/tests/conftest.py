import math

import pytest

from harnack_lab import dynamics, geometry

TWO_PI = 2.0 * math.pi
_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(_ACCEPTANCE[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def torus64():
    return geometry.build_torus(2, 64, TWO_PI)


@pytest.fixture(scope="session")
def sphere128():
    return geometry.build_sphere(128, 1.0)


@pytest.fixture(scope="session")
def torus_run(torus64):
    """Seeded log-heat runs on the reference torus, cached by (a, seed)."""
    cache = {}

    def get(a: float, seed: int):
        if (a, seed) not in cache:
            spec = dynamics.FlowSpec(torus64, dynamics.LogHeat(a), dynamics.StaticTorus(), 1.0,
                                     dynamics.output_grid(0.01, 1.0, 100))
            cache[a, seed] = dynamics.run(spec, dynamics.initial_field(torus64, seed))
        return cache[a, seed]
    return get


@pytest.fixture(scope="session")
def torus_pair(torus64):
    cache = {}

    def get(a: float, seed: int):
        if (a, seed) not in cache:
            spec = dynamics.FlowSpec(torus64, dynamics.LogHeat(a), dynamics.StaticTorus(), 1.0,
                                     dynamics.output_grid(0.01, 1.0, 100))
            phi, psi = dynamics.constrained_pair(torus64, seed, seed + 100)
            cache[a, seed] = dynamics.run_pair(spec, phi, psi)
        return cache[a, seed]
    return get


@pytest.fixture(scope="session")
def sphere_pair(sphere128):
    """Unit static sphere, a = -1, ratio floor c0 = 0.5."""
    cache = {}

    def get(seed: int):
        if seed not in cache:
            spec = dynamics.FlowSpec(sphere128, dynamics.LogHeat(-1.0), dynamics.StaticSphere(1.0), 1.0,
                                     dynamics.output_grid(0.01, 1.0, 100))
            phi, psi = dynamics.constrained_pair(sphere128, seed, seed + 100, c0=0.5)
            cache[seed] = dynamics.run_pair(spec, phi, psi, c0=0.5)
        return cache[seed]
    return get


@pytest.fixture(scope="session")
def eps_run(sphere128):
    cache = {}

    def get(eps: float, seed: int = 1):
        if (eps, seed) not in cache:
            t_end = 0.8 if eps == 0 else min(0.8, 0.8 / (2.0 * eps))
            metric = dynamics.StaticSphere(1.0) if eps == 0 else dynamics.EpsRicciSphere(1.0, eps)
            spec = dynamics.FlowSpec(sphere128, dynamics.LogSobolevEps(eps), metric, t_end,
                                     dynamics.output_grid(0.01, t_end, 80))
            cache[eps, seed] = dynamics.run(spec, dynamics.initial_field(sphere128, seed))
        return cache[eps, seed]
    return get


@pytest.fixture(scope="session")
def sobolev_runs(torus64, sphere128):
    """Gradient-estimate runs: static torus to t=1 and the Ricci-flow sphere to t=0.4."""
    torus = dynamics.FlowSpec(torus64, dynamics.LogSobolev(), dynamics.StaticTorus(), 1.0,
                              dynamics.output_grid(0.01, 1.0, 100))
    sphere = dynamics.FlowSpec(sphere128, dynamics.LogSobolev(), dynamics.RicciSphere(1.0), 0.4,
                               dynamics.output_grid(0.01, 0.4, 80))
    return {
        "torus": dynamics.run(torus, dynamics.initial_field(torus64, 1, offset=2.0)),
        "sphere": dynamics.run(sphere, dynamics.initial_field(sphere128, 1, offset=2.0)),
    }
