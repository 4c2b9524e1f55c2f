"""Newline-delimited JSON over TCP: lets an outside agent drive cases.

Client ops and server replies, one JSON object per line:

    {"op": "hello", "interventions": [...], "delta": 1.0}   -> ready
    {"op": "reset", "case_nr": 7}  (or "case_seed")          -> decision | done
    {"op": "act", "action": "wait"}                          -> decision | done
    {"op": "close"}                                          -> connection closed

``delta`` sets the regime of decisions outside the active interventions
(1.0 = bank rules). ``case_seed`` replaces the server seed for one case.
Errors answer with ``{"type": "error", "message": ...}`` and leave the
session as it was. Unknown fields are ignored.
"""

from __future__ import annotations

import asyncio
import json
import logging
import socket
import threading
from typing import Any, Optional

from ..core import DEFAULT_SPEC, Event, ProcessSpec, SimulationError
from ..engine import Session
from ..interventions import InterventionSequence, as_sequence
from ..policies import DEFAULT_BANK, BankPolicy, PolicyRegime
from ..stochastic import StreamProvider

logger = logging.getLogger(__name__)

MAX_LINE = 1 << 20


def event_dict(e: Event) -> dict:
    return {
        "activity": e.activity.value,
        "start": e.start,
        "end": e.end,
        "cost": e.cost,
        "cum_cost": e.cum_cost,
        "amount": e.amount,
        "est_quality": e.est_quality,
        "unc_quality": e.unc_quality,
        "interest_rate": e.interest_rate,
        "discount_factor": e.discount_factor,
    }


class ProtocolError(ValueError):
    pass


class Connection:
    """Per-connection protocol state; one request in flight at a time."""

    def __init__(self, seed: int, spec: ProcessSpec = DEFAULT_SPEC, bank: BankPolicy = DEFAULT_BANK):
        self.seed = seed
        self.spec = spec
        self.bank = bank
        self.active: Optional[InterventionSequence] = None
        self.background = PolicyRegime.bank()
        self.delta = 1.0
        self.session: Optional[Session] = None

    def _reply_for_session(self) -> dict:
        s = self.session
        if s.done:
            r = s.result
            return {
                "type": "done",
                "case_nr": s.case_nr,
                "profit": r.profit,
                "accepted": r.accepted,
                "canceled": r.canceled,
                "events": [event_dict(e) for e in r.state.events],
            }
        p = s.pending
        return {
            "type": "decision",
            "case_nr": s.case_nr,
            "intervention": p.kind.value,
            "point_index": p.index,
            "allowed": list(p.allowed),
            "prefix": [event_dict(e) for e in s.state.events],
        }

    def handle(self, msg: Any) -> Optional[dict]:
        if not isinstance(msg, dict):
            raise ProtocolError("message must be a JSON object")
        op = msg.get("op")
        if op == "hello":
            try:
                self.active = as_sequence(msg.get("interventions", []))
                delta = float(msg.get("delta", 1.0))
                self.background = PolicyRegime.bank() if delta == 1.0 else PolicyRegime.mixed(delta)
            except (TypeError, ValueError) as exc:
                raise ProtocolError(str(exc)) from None
            self.delta = delta
            self.session = None
            return {"type": "ready", "interventions": [k.value for k in self.active], "delta": delta, "seed": self.seed}
        if op == "reset":
            if self.active is None:
                raise ProtocolError("send hello before reset")
            seed = self.seed
            if "case_seed" in msg:
                seed = _as_int(msg["case_seed"], "case_seed")
            case_nr = _as_int(msg.get("case_nr", 0), "case_nr")
            self.session = Session(case_nr, self.active, StreamProvider(seed), self.spec, self.bank, self.background)
            return self._reply_for_session()
        if op == "act":
            if self.session is None:
                raise ProtocolError("act before reset")
            if self.session.done:
                raise ProtocolError("case already finished; send reset")
            action = msg.get("action")
            allowed = list(self.session.pending.allowed)
            if action not in allowed:
                raise ProtocolError(f"action {action!r} not allowed; allowed: {allowed}")
            self.session.step(action)
            return self._reply_for_session()
        if op == "close":
            return None
        raise ProtocolError(f"unknown op {op!r}")


def _as_int(v, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProtocolError(f"{name} must be an integer")
    return v


def _encode(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode()


def process_line(conn: Connection, line: bytes) -> tuple[Optional[dict], bool]:
    """Returns (reply, keep_open)."""
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return {"type": "error", "message": "malformed JSON"}, True
    try:
        reply = conn.handle(msg)
    except (ProtocolError, SimulationError) as exc:
        out = {"type": "error", "message": str(exc)}
        if conn.session is not None and not conn.session.done:
            out["allowed"] = list(conn.session.pending.allowed)
        return out, True
    except Exception as exc:  # keep the server alive whatever one client sends
        logger.exception("unexpected error")
        return {"type": "error", "message": f"internal error: {exc}"}, True
    if reply is None:
        return None, False
    return reply, True


async def _client_loop(reader, writer, seed, spec, bank) -> None:
    conn = Connection(seed, spec, bank)
    try:
        while True:
            try:
                line = await reader.readline()
            except (asyncio.LimitOverrunError, ValueError):
                writer.write(_encode({"type": "error", "message": "line too long"}))
                break
            if not line:
                break
            if not line.strip():
                continue
            reply, keep = process_line(conn, line)
            if reply is not None:
                writer.write(_encode(reply))
                await writer.drain()
            if not keep:
                break
    except ConnectionError:
        pass
    finally:
        writer.close()


async def start_server(host: str = "127.0.0.1", port: int = 0, seed: int = 0, spec=None, bank=None):
    spec = spec or DEFAULT_SPEC
    bank = bank or DEFAULT_BANK
    return await asyncio.start_server(
        lambda r, w: _client_loop(r, w, seed, spec, bank), host, port, limit=MAX_LINE
    )


def serve(port: int, seed: int, host: str = "127.0.0.1", spec=None, bank=None) -> None:
    async def main():
        server = await start_server(host, port, seed, spec, bank)
        logger.info("listening on %s", ", ".join(str(s.getsockname()) for s in server.sockets))
        async with server:
            await server.serve_forever()

    asyncio.run(main())


class ServerThread:
    """Runs the server on a background event loop; handy for tests and notebooks."""

    def __init__(self, seed: int = 0, host: str = "127.0.0.1", port: int = 0, spec=None, bank=None):
        self.seed, self.host, self.spec, self.bank = seed, host, spec, bank
        self._port = port
        self.port: Optional[int] = None
        self._loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self._loop.run_forever, daemon=True)
        self._server = None

    def start(self) -> "ServerThread":
        self._thread.start()
        fut = asyncio.run_coroutine_threadsafe(
            start_server(self.host, self._port, self.seed, self.spec, self.bank), self._loop
        )
        self._server = fut.result(timeout=10)
        self.port = self._server.sockets[0].getsockname()[1]
        return self

    def stop(self) -> None:
        async def shutdown():
            self._server.close()
            await self._server.wait_closed()

        asyncio.run_coroutine_threadsafe(shutdown(), self._loop).result(timeout=10)
        self._loop.call_soon_threadsafe(self._loop.stop)
        self._thread.join(timeout=10)

    def __enter__(self) -> "ServerThread":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class Client:
    """Blocking client for the protocol."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self.sock.makefile("rwb")

    def request(self, msg: dict) -> dict:
        self._file.write(_encode(msg))
        self._file.flush()
        line = self._file.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return json.loads(line)

    def send_raw(self, data: bytes) -> dict:
        self._file.write(data)
        self._file.flush()
        return json.loads(self._file.readline())

    def hello(self, interventions, delta: float = 1.0) -> dict:
        return self.request({"op": "hello", "interventions": [str(k) for k in as_sequence(interventions)], "delta": delta})

    def reset(self, case_nr: int = 0, case_seed: Optional[int] = None) -> dict:
        msg = {"op": "reset", "case_nr": case_nr}
        if case_seed is not None:
            msg["case_seed"] = case_seed
        return self.request(msg)

    def act(self, action: str) -> dict:
        return self.request({"op": "act", "action": action})

    def run_case(self, case_nr: int, choose) -> dict:
        """Drive one case with ``choose(decision_msg) -> action``; returns the done message."""
        msg = self.reset(case_nr)
        while msg["type"] == "decision":
            msg = self.act(choose(msg))
        if msg["type"] != "done":
            raise RuntimeError(msg.get("message", "unexpected reply"))
        return msg

    def close(self) -> None:
        try:
            self._file.write(_encode({"op": "close"}))
            self._file.flush()
        except OSError:
            pass
        self._file.close()
        self.sock.close()

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
