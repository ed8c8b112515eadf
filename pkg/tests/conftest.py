import pytest

from fogecg.signal import EcgSynthParams, synthesize


@pytest.fixture(scope="session")
def make_stream():
    cache = {}

    def _make(**kw):
        key = tuple(sorted(kw.items()))
        if key not in cache:
            cache[key] = synthesize(EcgSynthParams(**kw))
        return cache[key]

    return _make
