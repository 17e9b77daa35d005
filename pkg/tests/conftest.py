import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

TABLE2_TSV = """Kindness\tB|B|B|O|O|O|B|B|B
is\tO|O|O|O|O|O|I|I|O
like\tO|O|O|O|O|O|I|I|O
snow\tO|O|B|O|O|O|I|I|O
"""


@pytest.fixture
def table2_file(tmp_path):
    path = tmp_path / "table2.tsv"
    path.write_text(TABLE2_TSV, encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def overfit_path():
    return os.path.join(DATA_DIR, "overfit32.tsv")


@pytest.fixture(scope="session")
def glove_tiny_path():
    return os.path.join(DATA_DIR, "glove_tiny.txt")


@pytest.fixture(scope="session")
def overfit_sentences(overfit_path):
    from emplite.corpus import parse_dataset

    return parse_dataset(overfit_path)
