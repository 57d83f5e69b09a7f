import json

import pytest

from gw_border.family import builtin_family


@pytest.fixture(scope="session")
def cayley():
    return builtin_family("cayley")


@pytest.fixture(scope="session")
def plane():
    return builtin_family("plane")


@pytest.fixture(scope="session")
def binary():
    return builtin_family("binary")


@pytest.fixture(scope="session")
def motzkin():
    return builtin_family("motzkin")


@pytest.fixture(scope="session")
def unary():
    return builtin_family("unary")


@pytest.fixture
def psi_file(tmp_path):
    """Write a custom family file and return its path."""

    def _write(payload, name="my_psi.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return _write
