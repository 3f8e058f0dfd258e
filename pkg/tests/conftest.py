import numpy as np
import pytest

from dtt.hmm import GeneticMap, HmmParams
from dtt.simulate import PopulationModel, random_frequencies, simulate_cohort


def make_cohort(n=60, p=80, morgans=0.5, seed=0, chroms=1, epsilon=1e-8):
    maps = [GeneticMap.uniform(p // chroms, morgans, chrom=c + 1) for c in range(chroms)]
    if chroms == 1:
        gmap = maps[0]
    else:
        gmap = GeneticMap(
            [s for m in maps for s in m.site_ids],
            np.concatenate([m.chrom for m in maps]),
            np.concatenate([m.position for m in maps]),
            np.concatenate([m.morgans for m in maps]),
        )
    freqs = random_frequencies(gmap.p, seed)
    model = PopulationModel(freqs, gmap, n=n)
    data = simulate_cohort(model, HmmParams(epsilon), seed)
    y = (np.random.default_rng(seed + 1000).random(n) < 0.5).astype(float)
    return data.with_phenotype(y)


@pytest.fixture
def cohort():
    return make_cohort()


@pytest.fixture
def two_chrom_cohort():
    return make_cohort(n=40, p=60, chroms=2, seed=3)


ACCEPTANCE_LINES = []


def report(criterion: int, passed: bool, detail: str) -> bool:
    """Record and print one acceptance line; returns ``passed``."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
