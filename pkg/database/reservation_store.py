#!/usr/bin/env python3
"""
Storage backends for the corridor reservation table.

Stores only persist records and events as plain dicts; the three-case
decision rule lives in ``coordination.corridor.ReservationTable``, which is
the single writer.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

import redis
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from database.connection import get_redis_client
from database.redis_keys import ReservationDataTypes, ReservationExpirePolicy, ReservationKeys

logger = logging.getLogger(__name__)

_redis_retry = retry(stop=stop_after_attempt(3),
                     wait=wait_exponential(multiplier=0.1, max=1.0),
                     retry=retry_if_exception_type((redis.exceptions.ConnectionError,
                                                    redis.exceptions.TimeoutError)),
                     reraise=True)


class ReservationStore(ABC):

    @abstractmethod
    def get(self, corridor_id: str) -> Optional[Dict[str, Any]]:
        """Stored record for a corridor, or None when never reserved."""

    @abstractmethod
    def put(self, corridor_id: str, record: Dict[str, Any]) -> None:
        ...

    @abstractmethod
    def append_event(self, event: Dict[str, Any]) -> None:
        ...

    @abstractmethod
    def events(self) -> List[Dict[str, Any]]:
        ...

    @abstractmethod
    def clear(self) -> None:
        ...


class InMemoryReservationStore(ReservationStore):

    def __init__(self):
        self._records: Dict[str, Dict[str, Any]] = {}
        self._events: List[Dict[str, Any]] = []

    def get(self, corridor_id: str) -> Optional[Dict[str, Any]]:
        record = self._records.get(corridor_id)
        return dict(record) if record is not None else None

    def put(self, corridor_id: str, record: Dict[str, Any]) -> None:
        self._records[corridor_id] = dict(record)

    def append_event(self, event: Dict[str, Any]) -> None:
        self._events.append(dict(event))

    def events(self) -> List[Dict[str, Any]]:
        return [dict(event) for event in self._events]

    def clear(self) -> None:
        self._records.clear()
        self._events.clear()


class RedisReservationStore(ReservationStore):
    """Records as Redis hashes and events as a JSON list, namespaced per episode."""

    def __init__(self, client: redis.Redis, episode: str = "default"):
        self.client = client
        self.keys = ReservationKeys(episode)

    @_redis_retry
    def get(self, corridor_id: str) -> Optional[Dict[str, Any]]:
        return ReservationDataTypes.decode_record(self.client.hgetall(self.keys.corridor_record(corridor_id)))

    @_redis_retry
    def put(self, corridor_id: str, record: Dict[str, Any]) -> None:
        key = self.keys.corridor_record(corridor_id)
        self.client.hset(key, mapping=ReservationDataTypes.encode_record(record))
        self.client.expire(key, ReservationExpirePolicy.EPISODE)
        self.client.sadd(self.keys.corridor_index(), corridor_id)

    @_redis_retry
    def append_event(self, event: Dict[str, Any]) -> None:
        key = self.keys.event_log()
        self.client.rpush(key, ReservationDataTypes.encode_event(event))
        self.client.expire(key, ReservationExpirePolicy.EVENTS)

    @_redis_retry
    def events(self) -> List[Dict[str, Any]]:
        return [ReservationDataTypes.decode_event(item) for item in self.client.lrange(self.keys.event_log(), 0, -1)]

    @_redis_retry
    def clear(self) -> None:
        keys = sorted(self.client.scan_iter(match=self.keys.episode_pattern()))
        if keys:
            self.client.delete(*keys)
        logger.info(f"Cleared reservation keys for episode '{self.keys.episode}'")


def create_reservation_store(backend: str = "memory", episode: str = "default") -> ReservationStore:
    """
    Store for the given backend name ('memory' or 'redis').

    Raises:
        ValueError: unknown backend name
    """
    if backend == "memory":
        return InMemoryReservationStore()
    if backend == "redis":
        store = RedisReservationStore(get_redis_client(), episode)
        store.clear()
        return store
    raise ValueError(f"unknown reservation backend '{backend}'")
