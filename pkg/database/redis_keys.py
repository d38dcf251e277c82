#!/usr/bin/env python3
"""
Redis key layout for the shared corridor reservation table.

Keys are namespaced per episode so several simulations can share one
Redis instance:

    nav:<episode>:corridor:<corridor_id>      hash   reservation record
    nav:<episode>:corridor:index              set    known corridor ids
    nav:<episode>:reservations:events         list   JSON reservation events
"""

import json
from typing import Any, Dict, Optional


class ReservationKeys:
    NAMESPACE = "nav"
    SEPARATOR = ":"

    CORRIDOR = "corridor"
    RESERVATIONS = "reservations"

    def __init__(self, episode: str = "default"):
        self.episode = episode

    def _build_key(self, *parts: str) -> str:
        return self.SEPARATOR.join([self.NAMESPACE, self.episode] + list(parts))

    def corridor_record(self, corridor_id: str) -> str:
        return self._build_key(self.CORRIDOR, corridor_id)

    def corridor_index(self) -> str:
        return self._build_key(self.CORRIDOR, "index")

    def event_log(self) -> str:
        return self._build_key(self.RESERVATIONS, "events")

    def episode_pattern(self) -> str:
        return self._build_key("*")


class ReservationDataTypes:
    """Record and event encodings; Redis hashes only hold strings."""

    @staticmethod
    def encode_record(record: Dict[str, Any]) -> Dict[str, str]:
        return {key: repr(value) if isinstance(value, float) else str(value)
                for key, value in record.items()}

    @staticmethod
    def decode_record(data: Optional[Dict[str, str]]) -> Optional[Dict[str, Any]]:
        if not data:
            return None
        return {
            "status": data["status"],
            "direction": data["direction"],
            "start_time": float(data["start_time"]),
            "end_time": float(data["end_time"]),
        }

    @staticmethod
    def encode_event(event: Dict[str, Any]) -> str:
        return json.dumps(event, sort_keys=True)

    @staticmethod
    def decode_event(data: str) -> Dict[str, Any]:
        return json.loads(data)


class ReservationExpirePolicy:
    """TTLs in seconds for episode keys; a finished episode's table is disposable."""

    EPISODE = 60 * 60 * 6
    EVENTS = 60 * 60 * 24
