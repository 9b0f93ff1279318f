import pathlib

import pytest

import subvalue
from subvalue.model import parse_problem

EXAMPLES = pathlib.Path(subvalue.__file__).parent / "examples"


def load_example(name):
    return parse_problem((EXAMPLES / f"{name}.json").read_text())


@pytest.fixture(scope="session")
def ex1():
    return load_example("ex1")


@pytest.fixture(scope="session")
def ex2():
    return load_example("ex2")


@pytest.fixture(scope="session")
def ex3():
    return load_example("ex3")


@pytest.fixture(scope="session")
def ex4():
    return load_example("ex4")


@pytest.fixture(scope="session")
def ex1_sweep():
    """Degrees 4..12 on the scalar benchmark, with the analytic oracle."""
    import time

    from subvalue.synthesis import degree_sweep, example1_vstar
    spec, cfg = load_example("ex1")
    t0 = time.perf_counter()
    study = degree_sweep(spec, cfg, [4, 6, 8, 10, 12], oracle=example1_vstar)
    wall = time.perf_counter() - t0
    return spec, cfg, study, wall


@pytest.fixture(scope="session")
def ex2_cert():
    from subvalue.synthesis import synthesize
    spec, cfg = load_example("ex2")
    return spec, cfg, synthesize(spec, cfg)


@pytest.fixture(scope="session")
def ex3_cert():
    from subvalue.synthesis import synthesize
    spec, cfg = load_example("ex3")
    return spec, cfg, synthesize(spec, cfg)


@pytest.fixture(scope="session")
def lorenz_run():
    import time

    from subvalue.reach import lorenz_pipeline
    t0 = time.perf_counter()
    out, cert, report = lorenz_pipeline(degree=4, grid_n=20)
    return out, cert, report, time.perf_counter() - t0
