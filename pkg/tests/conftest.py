import numpy as np
import pytest

from cmasim.cli import bundled
from cmasim.config import ArchConfig, CostTable, EtSpec, StageDnn, WorkloadConfig, load_config
from cmasim.pipeline import Simulator


def load_bundled(name):
    return load_config(bundled("fom"), bundled(name))


@pytest.fixture(scope="session")
def movielens_sim():
    arch, cost, work = load_bundled("movielens")
    return Simulator(arch, cost, work)


@pytest.fixture(scope="session")
def criteo_sim():
    arch, cost, work = load_bundled("criteo")
    return Simulator(arch, cost, work)


def item_only_sim(n, entries=None, seed=0, lsh_bits=256):
    """Simulator holding just an item table of ``n`` random vectors."""
    entries = entries or n
    work = WorkloadConfig("items", (EtSpec("items", "ItET", entries),), lsh_bits=lsh_bits,
                          seed=seed)
    rng = np.random.default_rng(seed)
    return Simulator(ArchConfig(), CostTable(), work, tables={"items": rng.standard_normal((n, 32))})


def small_workload(**kw):
    tables = (EtSpec("u", "UIET-shared", 600), EtSpec("r", "UIET-rank", 40),
              EtSpec("items", "ItET", 300))
    base = dict(name="small", tables=tables,
                filtering=StageDnn((4, 8), (40, 32)), ranking=StageDnn((4, 8), (72, 16, 1)),
                lookups_per_table=3, theta=100, top_k=3, seed=5)
    base.update(kw)
    return WorkloadConfig(**base)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
