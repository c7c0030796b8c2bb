import pytest

from learnedlsm.bench.experiments import small_store_options
from learnedlsm.engine import Store
from learnedlsm.keys import encode_key


def k(i: int) -> bytes:
    return encode_key(i)


def v(i: int, ver: int = 0) -> bytes:
    return f"value-{i}-{ver}".encode()


@pytest.fixture
def make_store(tmp_path):
    """Factory for small foreground-only stores; closes them at teardown."""
    opened = []

    def factory(name: str = "db", **overrides) -> Store:
        store = Store(str(tmp_path / name), small_store_options(**overrides))
        opened.append(store)
        return store

    yield factory
    for s in opened:
        s.close()
