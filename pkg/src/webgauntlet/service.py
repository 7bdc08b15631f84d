"""Session-based HTTP service exposing episodes to external agents.

JSON over HTTP, stdlib only. One episode per session; one action in
flight per session at a time (a concurrent action gets 409 busy). The
protocol mirrors the in-process runner exactly, so a remote agent
replaying the same decisions produces the same run record.

Endpoints:
    POST   /sessions                 create an episode session
    GET    /sessions/<id>/observation current observation (wire form)
    POST   /sessions/<id>/actions    submit one agent message
    GET    /sessions/<id>/result     final run record (after termination)
    DELETE /sessions/<id>            discard the session
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import catalog, protocol
from .episode import DEFAULT_MAX_STEPS, EpisodeError, EpisodeRunner
from .perturb import MODES
from .suite import build_config


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class _Session:
    def __init__(self, session_id: str, runner: EpisodeRunner):
        self.session_id = session_id
        self.runner = runner
        self.lock = threading.Lock()


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def create(self, runner: EpisodeRunner) -> _Session:
        with self._lock:
            self._counter += 1
            session_id = f"s{self._counter:06d}"
            session = _Session(session_id, runner)
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> _Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id!r}")
        return session

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise ServiceError(404, "unknown_session", f"no session {session_id!r}")
            del self._sessions[session_id]


def _build_runner(body: dict) -> EpisodeRunner:
    task_id = body.get("task_id")
    if not isinstance(task_id, str):
        raise ServiceError(400, "bad_request", "task_id is required")
    try:
        task = catalog.get_task(task_id)
    except KeyError:
        raise ServiceError(404, "unknown_task", f"no task {task_id!r}") from None
    mode = body.get("mode", "clean")
    if mode not in MODES:
        raise ServiceError(400, "bad_request", f"unknown mode {mode!r}")
    try:
        seed = int(body.get("seed", 0))
        max_steps = int(body.get("max_steps", DEFAULT_MAX_STEPS))
    except (TypeError, ValueError):
        raise ServiceError(400, "bad_request", "seed and max_steps must be integers") from None
    overrides = {
        key: body[key]
        for key in ("failure_p", "popup_f", "chaos_magnitude", "noise_density")
        if key in body
    }
    try:
        config = build_config(mode, seed, overrides)
    except ValueError as exc:
        raise ServiceError(400, "bad_request", str(exc)) from None
    suite_seed = body.get("suite_seed")
    seed_index = body.get("seed_index")
    return EpisodeRunner(
        catalog.get_site(task.site_id),
        task,
        config,
        agent_name=str(body.get("agent", "external")),
        max_steps=max_steps,
        suite_seed=None if suite_seed is None else int(suite_seed),
        seed_index=None if seed_index is None else int(seed_index),
    )


class _Handler(BaseHTTPRequestHandler):
    server_version = "webgauntlet"
    store: SessionStore  # set by make_server

    # -- plumbing -----------------------------------------------------------

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _send_error(self, err: ServiceError) -> None:
        self._send(err.status, {"error": {"code": err.code, "message": err.message}})

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            return json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            raise ServiceError(400, "bad_json", "request body is not valid JSON") from None

    def _route(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        return parts

    # -- verbs --------------------------------------------------------------

    def do_POST(self):
        try:
            parts = self._route()
            if parts == ["sessions"]:
                body = self._read_body()
                if not isinstance(body, dict):
                    raise ServiceError(400, "bad_request", "body must be an object")
                runner = _build_runner(body)
                session = self.store.create(runner)
                self._send(
                    201,
                    {
                        "session_id": session.session_id,
                        "task_id": runner.task.task_id,
                        "site_id": runner.site.site_id,
                        "mode": runner.config.mode,
                        "instruction": runner.task.instruction,
                        "max_steps": runner.max_steps,
                    },
                )
                return
            if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "actions":
                session = self.store.get(parts[1])
                body = self._read_body()
                if not session.lock.acquire(blocking=False):
                    raise ServiceError(
                        409, "busy", "another action is already in flight"
                    )
                try:
                    if session.runner.terminated:
                        raise ServiceError(
                            409, "terminated", "episode already terminated"
                        )
                    try:
                        message = protocol.parse_agent_message(body)
                    except protocol.MalformedMessage:
                        record = session.runner.reject_malformed(body)
                    else:
                        record = session.runner.act(message)
                finally:
                    session.lock.release()
                self._send(
                    200,
                    {
                        "step": record.step,
                        "outcome": record.outcome,
                        "terminated": session.runner.terminated,
                        "terminal_status": session.runner.terminal_status,
                    },
                )
                return
            raise ServiceError(404, "not_found", f"no route {self.path!r}")
        except ServiceError as err:
            self._send_error(err)

    def do_GET(self):
        try:
            parts = self._route()
            if len(parts) == 3 and parts[0] == "sessions":
                session = self.store.get(parts[1])
                payload = None
                # Release the lock before writing: a client that has read the
                # response may already be sending its next action.
                with session.lock:
                    if parts[2] == "observation":
                        try:
                            payload = session.runner.observation().to_wire()
                        except EpisodeError:
                            raise ServiceError(
                                409, "terminated", "episode already terminated"
                            ) from None
                    elif parts[2] == "result":
                        try:
                            payload = session.runner.result().to_wire()
                        except EpisodeError:
                            raise ServiceError(
                                409, "running", "episode still running"
                            ) from None
                if payload is not None:
                    self._send(200, payload)
                    return
            raise ServiceError(404, "not_found", f"no route {self.path!r}")
        except ServiceError as err:
            self._send_error(err)

    def do_DELETE(self):
        try:
            parts = self._route()
            if len(parts) == 2 and parts[0] == "sessions":
                self.store.delete(parts[1])
                self._send(200, {"deleted": parts[1]})
                return
            raise ServiceError(404, "not_found", f"no route {self.path!r}")
        except ServiceError as err:
            self._send_error(err)


def make_server(host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    store = SessionStore()
    handler = type("BoundHandler", (_Handler,), {"store": store})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve(host: str, port: int) -> None:
    server = make_server(host, port)
    address = server.server_address
    print(f"listening on http://{address[0]}:{address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


# --- client ----------------------------------------------------------------


class ServiceClient:
    """Minimal JSON client for the session API (urllib, no dependencies)."""

    def __init__(self, base_url: str):
        self.base_url = base_url.rstrip("/")

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        data = None if body is None else json.dumps(body).encode("utf-8")
        request = urllib.request.Request(
            f"{self.base_url}{path}",
            data=data,
            method=method,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(request) as response:
                return json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            payload = exc.read().decode("utf-8", "replace")
            try:
                detail = json.loads(payload).get("error", {})
            except ValueError:
                detail = {"code": "http_error", "message": payload}
            raise ServiceError(
                exc.code, detail.get("code", "http_error"), detail.get("message", "")
            ) from None

    def create_session(self, **kwargs) -> dict:
        return self._request("POST", "/sessions", kwargs)

    def observation(self, session_id: str) -> dict:
        return self._request("GET", f"/sessions/{session_id}/observation")

    def act(self, session_id: str, message: dict) -> dict:
        return self._request("POST", f"/sessions/{session_id}/actions", message)

    def result(self, session_id: str) -> dict:
        return self._request("GET", f"/sessions/{session_id}/result")

    def delete(self, session_id: str) -> dict:
        return self._request("DELETE", f"/sessions/{session_id}")
