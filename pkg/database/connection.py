#!/usr/bin/env python3
"""
Redis connection settings and client factory for the shared reservation table.
"""

import logging
import os
from typing import Optional

import redis
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

logger = logging.getLogger(__name__)


class RedisConfig:
    def __init__(self):
        self.redis_host = os.getenv('REDIS_HOST', 'localhost')
        self.redis_port = int(os.getenv('REDIS_PORT', 6379))
        self.redis_db = int(os.getenv('REDIS_DB', 0))
        self.redis_password = os.getenv('REDIS_PASSWORD', None)
        self.connection_timeout = float(os.getenv('REDIS_TIMEOUT', 5))
        self.connect_attempts = int(os.getenv('REDIS_CONNECT_ATTEMPTS', 3))

    @property
    def redis_url(self) -> str:
        auth = f":{self.redis_password}@" if self.redis_password else ""
        return f"redis://{auth}{self.redis_host}:{self.redis_port}/{self.redis_db}"


_redis_config: Optional[RedisConfig] = None
_redis_client: Optional[redis.Redis] = None


def get_redis_config() -> RedisConfig:
    global _redis_config
    if _redis_config is None:
        _redis_config = RedisConfig()
    return _redis_config


def create_redis_client(config: Optional[RedisConfig] = None) -> redis.Redis:
    """
    Connect and ping, retrying with exponential backoff.

    Raises:
        redis.exceptions.ConnectionError: if every attempt fails
    """
    config = config or get_redis_config()

    @retry(stop=stop_after_attempt(config.connect_attempts),
           wait=wait_exponential(multiplier=0.2, max=2.0),
           retry=retry_if_exception_type(redis.exceptions.ConnectionError),
           reraise=True)
    def connect() -> redis.Redis:
        client = redis.Redis.from_url(
            config.redis_url,
            decode_responses=True,
            socket_timeout=config.connection_timeout,
            socket_connect_timeout=config.connection_timeout,
        )
        client.ping()
        return client

    try:
        client = connect()
    except redis.exceptions.ConnectionError as e:
        logger.error(f"Redis connection to {config.redis_host}:{config.redis_port} failed: {e}")
        raise
    logger.info(f"Connected to Redis at {config.redis_host}:{config.redis_port}/{config.redis_db}")
    return client


def get_redis_client() -> redis.Redis:
    global _redis_client
    if _redis_client is None:
        _redis_client = create_redis_client()
    return _redis_client


def close_redis_client() -> None:
    global _redis_client
    if _redis_client is not None:
        _redis_client.close()
        _redis_client = None
