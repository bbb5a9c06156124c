"""Boots the full service suite on localhost: five APIs behind one gateway.

Each service runs its own uvicorn server in a thread on an ephemeral port;
the gateway gets the default route table pointing at them. One data root
holds everything: ``log/`` (commit log), ``store/`` (object store), and
``meta/`` (event docs, keyword config, users).
"""

from __future__ import annotations

import logging
import threading
import time
from pathlib import Path

import uvicorn

from . import analysissvc, authsvc, eventsvc, querysvc, tweetsvc
from .authsvc import AuthSettings
from .gateway import Gateway, default_routes

logger = logging.getLogger(__name__)


class UvicornThread:
    """One ASGI app on an ephemeral (or fixed) localhost port."""

    def __init__(self, app, name: str, port: int = 0):
        config = uvicorn.Config(
            app, host="127.0.0.1", port=port,
            log_level="warning", lifespan="on",
        )
        self.name = name
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(
            target=self.server.run, name=f"uvicorn-{name}", daemon=True)

    def start(self, timeout: float = 15.0) -> None:
        self.thread.start()
        deadline = time.monotonic() + timeout
        while not self.server.started:
            if time.monotonic() > deadline or not self.thread.is_alive():
                raise RuntimeError(f"server {self.name} failed to start")
            time.sleep(0.01)

    @property
    def port(self) -> int:
        return self.server.servers[0].sockets[0].getsockname()[1]

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=15)
        if self.thread.is_alive():
            logger.warning("server %s did not exit cleanly", self.name)


class ServiceSuite:
    """The whole backend on one data root; start() returns when reachable."""

    def __init__(self, data_root: str | Path, gateway_port: int = 0,
                 auth_disabled: bool = False,
                 settings: AuthSettings | None = None,
                 static_root: str | Path | None = None,
                 index_ttl: float = tweetsvc.INDEX_TTL,
                 query_ttl: float = querysvc.JOB_TTL,
                 flush_threshold: int = 1000,
                 flush_interval: float = 3600.0,
                 supervisor_interval: float = 0.5):
        self.root = Path(data_root)
        self.log_root = self.root / "log"
        self.store_root = self.root / "store"
        self.meta_root = self.root / "meta"
        for directory in (self.log_root, self.store_root, self.meta_root):
            directory.mkdir(parents=True, exist_ok=True)
        self.config_path = self.meta_root / "keywords.json"
        self.settings = settings or AuthSettings.from_env(disabled=auth_disabled)
        self.gateway_port = gateway_port
        self.static_root = static_root

        self.services: dict[str, UvicornThread] = {}
        self.gateway_server: UvicornThread | None = None
        self._apps = {
            "authsvc": authsvc.create_app(
                self.meta_root / "users.json", self.settings),
            "eventsvc": eventsvc.create_app(
                self.meta_root, self.store_root, self.log_root, self.settings,
                config_path=self.config_path,
                flush_threshold=flush_threshold,
                flush_interval=flush_interval,
                supervisor_interval=supervisor_interval),
            "tweetsvc": tweetsvc.create_app(self.store_root, ttl=index_ttl),
            "querysvc": querysvc.create_app(
                self.store_root, settings=self.settings, ttl=query_ttl),
            "analysissvc": analysissvc.create_app(
                self.store_root, self.settings),
        }

    def start(self) -> None:
        try:
            for name, app in self._apps.items():
                server = UvicornThread(app, name)
                server.start()
                self.services[name] = server
            addresses = {name: server.url for name, server in self.services.items()}
            gateway = Gateway(default_routes(addresses),
                              static_root=self.static_root)
            self.gateway_server = UvicornThread(
                gateway, "gateway", port=self.gateway_port)
            self.gateway_server.start()
        except Exception:
            self.stop()
            raise

    def stop(self) -> None:
        if self.gateway_server is not None:
            self.gateway_server.stop()
            self.gateway_server = None
        for server in self.services.values():
            server.stop()
        self.services.clear()

    @property
    def base_url(self) -> str:
        if self.gateway_server is None:
            raise RuntimeError("suite is not running")
        return self.gateway_server.url

    def service_url(self, name: str) -> str:
        return self.services[name].url

    def __enter__(self) -> "ServiceSuite":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
