import pathlib

import pytest

from clonality.cli import read_mutations_file, read_probability_file
from clonality.model import MutationProfile

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def table1():
    """(tumor -> markers, catalog) for the two-colon / two-lung case."""
    tumors = read_mutations_file(str(FIXTURES / "table1_mutations.tsv"))
    catalog = read_probability_file(str(FIXTURES / "table1_probs.tsv"))
    return tumors, catalog


@pytest.fixture(scope="session")
def table5():
    """(tumor -> markers, catalog) for the prostate primaries / metastases case."""
    tumors = read_mutations_file(str(FIXTURES / "table5_mutations.tsv"))
    catalog = read_probability_file(str(FIXTURES / "table5_probs.tsv"))
    return tumors, catalog


def profile(tumors, tumor_id):
    return MutationProfile(tumor_id, frozenset(tumors[tumor_id]))
