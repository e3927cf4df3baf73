import functools

import pytest

from covlab.gallery.examples import ExampleParams, build_example, limit_space


@functools.lru_cache(maxsize=None)
def cached_example(family, j=1, mesh=None):
    return build_example(ExampleParams(family, j=j, mesh=mesh))


@functools.lru_cache(maxsize=None)
def cached_limit(family, mesh=None):
    return limit_space(family, ExampleParams(family, mesh=mesh))


@pytest.fixture
def example():
    return cached_example


@pytest.fixture
def limit():
    return cached_limit
