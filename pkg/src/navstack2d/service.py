"""State-stream service: snapshots out, operator commands in, over WebSocket.

A small RFC 6455 implementation on the standard library keeps the package
dependency-free; browsers and the bundled test client speak to it directly.
Messages are JSON objects with a ``type`` field: the server pushes
``snapshot`` frames at up to the local-map rate and accepts ``set_goal``,
``obstacle_cmd``, ``pause``, ``resume``, and ``step``; malformed input gets
an ``error`` reply and changes nothing.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading
import time

from .runner import NavRunner

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


def _accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def encode_frame(payload: bytes, opcode: int = OP_TEXT, mask: bool = False) -> bytes:
    head = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        head.append(mask_bit | n)
    elif n < 65536:
        head.append(mask_bit | 126)
        head += struct.pack(">H", n)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", n)
    if mask:
        key = struct.pack(">I", 0x12345678)
        head += key
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(head) + payload


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("socket closed")
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> tuple[int, bytes]:
    b0, b1 = _read_exact(sock, 2)
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    length = b1 & 0x7F
    if length == 126:
        (length,) = struct.unpack(">H", _read_exact(sock, 2))
    elif length == 127:
        (length,) = struct.unpack(">Q", _read_exact(sock, 8))
    key = _read_exact(sock, 4) if masked else None
    payload = _read_exact(sock, length) if length else b""
    if key:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, payload


class StateStreamServer:
    """Broadcasts runner snapshots and feeds client commands into the runner."""

    def __init__(self, runner: NavRunner, host: str = "127.0.0.1", port: int = 8765,
                 snapshot_hz: float = 10.0):
        self.runner = runner
        self.snapshot_period = 1.0 / snapshot_hz
        self.paused = False
        self._step_once = False
        self._clients: list[socket.socket] = []
        self._lock = threading.Lock()
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.2)
        self.port = self._server.getsockname()[1]
        self._running = True
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    # -- connection handling --
    def _accept_loop(self):
        while self._running:
            try:
                conn, _addr = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                self._handshake(conn)
            except Exception:
                conn.close()
                continue
            with self._lock:
                self._clients.append(conn)
            threading.Thread(target=self._client_loop, args=(conn,), daemon=True).start()

    def _handshake(self, conn: socket.socket):
        conn.settimeout(5.0)
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(4096)
            if not chunk:
                raise ConnectionError("client closed during handshake")
            data += chunk
        headers = {}
        for line in data.split(b"\r\n")[1:]:
            if b":" in line:
                k, v = line.split(b":", 1)
                headers[k.strip().lower()] = v.strip()
        key = headers.get(b"sec-websocket-key")
        if key is None:
            raise ConnectionError("not a websocket upgrade")
        resp = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {_accept_key(key.decode())}\r\n\r\n"
        )
        conn.sendall(resp.encode())
        conn.settimeout(None)

    def _client_loop(self, conn: socket.socket):
        try:
            while self._running:
                opcode, payload = read_frame(conn)
                if opcode == OP_CLOSE:
                    break
                if opcode == OP_PING:
                    conn.sendall(encode_frame(payload, OP_PONG))
                    continue
                if opcode != OP_TEXT:
                    continue
                self._handle_message(conn, payload)
        except (ConnectionError, OSError):
            pass
        finally:
            with self._lock:
                if conn in self._clients:
                    self._clients.remove(conn)
            conn.close()

    def _reply_error(self, conn: socket.socket, message: str, in_reply_to: str | None = None):
        msg = {"type": "error", "message": message}
        if in_reply_to:
            msg["in_reply_to"] = in_reply_to
        try:
            conn.sendall(encode_frame(json.dumps(msg).encode()))
        except OSError:
            pass

    def _handle_message(self, conn: socket.socket, payload: bytes):
        try:
            msg = json.loads(payload.decode())
            kind = msg["type"]
        except (ValueError, KeyError):
            self._reply_error(conn, "malformed message")
            return
        if kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
        elif kind == "step":
            self._step_once = True
        elif kind == "set_goal":
            if not all(isinstance(msg.get(k), (int, float)) for k in ("x", "y")):
                self._reply_error(conn, "set_goal needs numeric x and y", kind)
                return
            self.runner.submit_command(msg)
        elif kind == "obstacle_cmd":
            if msg.get("action") not in ("add", "move"):
                self._reply_error(conn, "obstacle_cmd action must be add or move", kind)
                return
            self.runner.submit_command(msg)
        else:
            self._reply_error(conn, f"unknown message type {kind!r}", str(kind))

    # -- broadcasting --
    def broadcast_snapshot(self):
        payload = json.dumps(self.runner.snapshot(), separators=(",", ":")).encode()
        frame = encode_frame(payload)
        with self._lock:
            clients = list(self._clients)
        for conn in clients:
            try:
                conn.sendall(frame)
            except OSError:
                with self._lock:
                    if conn in self._clients:
                        self._clients.remove(conn)

    def serve_run(self, realtime: bool = True):
        """Drive the runner until it finishes, pushing snapshots at the
        snapshot rate. Pause freezes the simulated clock; snapshots continue."""
        next_snapshot = 0.0
        wall_start = time.monotonic()
        sim_at_start = self.runner.t
        while self._running and not self.runner.done:
            if self.paused and not self._step_once:
                self.broadcast_snapshot()
                time.sleep(self.snapshot_period)
                wall_start = time.monotonic()
                sim_at_start = self.runner.t
                continue
            self._step_once = False
            self.runner.tick()
            if realtime:
                ahead = (self.runner.t - sim_at_start) - (time.monotonic() - wall_start)
                if ahead > 0:
                    time.sleep(min(ahead, 0.05))
            if self.runner.t >= next_snapshot:
                self.broadcast_snapshot()
                next_snapshot = self.runner.t + self.snapshot_period
        self.broadcast_snapshot()

    def close(self):
        self._running = False
        try:
            self._server.close()
        except OSError:
            pass
        with self._lock:
            for conn in self._clients:
                try:
                    conn.close()
                except OSError:
                    pass
            self._clients.clear()


class WsClient:
    """Minimal synchronous client, used by tests and scripted operators."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        key = base64.b64encode(b"navstack2d-test!").decode()
        req = (
            f"GET / HTTP/1.1\r\nHost: {host}:{port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        self.sock.sendall(req.encode())
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise ConnectionError("server closed during handshake")
            data += chunk
        if b"101" not in data.split(b"\r\n", 1)[0]:
            raise ConnectionError("websocket handshake refused")

    def send(self, msg: dict):
        self.sock.sendall(encode_frame(json.dumps(msg).encode(), mask=True))

    def recv(self) -> dict:
        while True:
            opcode, payload = read_frame(self.sock)
            if opcode == OP_TEXT:
                return json.loads(payload.decode())
            if opcode == OP_CLOSE:
                raise ConnectionError("server closed")

    def recv_until(self, predicate, limit: int = 500) -> dict:
        for _ in range(limit):
            msg = self.recv()
            if predicate(msg):
                return msg
        raise TimeoutError("predicate not satisfied within message limit")

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass
