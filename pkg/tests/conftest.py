import fnmatch
from pathlib import Path
from typing import Dict, List

import pytest

from planning.grid_map import GridMap
from planning.lattice import LatticeGraph
from planning.planner import LatticePlanner
from planning.primitives import build_primitives
from scenarios.loader import load_scenario

CORPUS = Path(__file__).resolve().parent.parent / "scenarios" / "corpus"


class FakeRedis:
    """In-process stand-in for the handful of redis.Redis calls the store makes."""

    def __init__(self):
        self.hashes: Dict[str, Dict[str, str]] = {}
        self.sets: Dict[str, set] = {}
        self.lists: Dict[str, List[str]] = {}
        self.ttls: Dict[str, int] = {}

    def hgetall(self, key):
        return dict(self.hashes.get(key, {}))

    def hset(self, key, mapping=None):
        self.hashes.setdefault(key, {}).update(mapping or {})
        return len(mapping or {})

    def expire(self, key, seconds):
        self.ttls[key] = seconds
        return True

    def sadd(self, key, *members):
        self.sets.setdefault(key, set()).update(members)
        return len(members)

    def smembers(self, key):
        return set(self.sets.get(key, set()))

    def rpush(self, key, *values):
        self.lists.setdefault(key, []).extend(values)
        return len(self.lists[key])

    def lrange(self, key, start, end):
        items = self.lists.get(key, [])
        return list(items[start:] if end == -1 else items[start:end + 1])

    def delete(self, *keys):
        removed = 0
        for key in keys:
            for table in (self.hashes, self.sets, self.lists):
                if key in table:
                    del table[key]
                    removed += 1
        return removed

    def keys(self, pattern):
        every = set(self.hashes) | set(self.sets) | set(self.lists)
        return sorted(k for k in every if fnmatch.fnmatch(k, pattern))

    def scan_iter(self, match=None):
        return iter(self.keys(match or "*"))


@pytest.fixture
def fake_redis():
    return FakeRedis()


@pytest.fixture(scope="session")
def primitives8():
    return build_primitives(8, 1.0, 1.0, 0.4)


@pytest.fixture(scope="session")
def open_map():
    return GridMap.empty(10, 10)


@pytest.fixture(scope="session")
def open_graph(open_map, primitives8):
    return LatticeGraph(open_map, primitives8, 0.4)


@pytest.fixture
def open_planner(open_graph):
    return LatticePlanner(open_graph)


@pytest.fixture
def corpus():
    def load(name: str):
        return load_scenario(CORPUS / f"{name}.yaml")
    return load
