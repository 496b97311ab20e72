"""Execution boundary: run an API on an input and report validity, crash,
or outputs over a newline-delimited JSON protocol.

Reference targets run in-process (values passed directly, no serialization)
or behind a subprocess worker that speaks the wire protocol; abnormal child
termination is synthesized into status Crash and the child is respawned.
One request is in flight per connection and ids strictly increase.
"""

from __future__ import annotations

import json
import os
import select
import subprocess
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from ..values import (
    ApiInput,
    ConcreteValue,
    DEFAULT_DTYPES,
    DecodeError,
    decode_value,
    encode_value,
    signature_doc,
)
from .reference import (
    ReferenceTarget,
    SimulatedCrash,
    TargetError,
    UnknownApi,
    get_target,
    list_reference_targets,
)

PROTOCOL_VERSION = "1"
DEFAULT_CALL_TIMEOUT_S = 5.0


class ProtocolError(Exception):
    """Malformed frame on the wire."""


class ExecutorUnavailable(Exception):
    pass


class Status(Enum):
    OK = "ok"
    ERROR = "error"
    CRASH = "crash"
    TIMEOUT = "timeout"


@dataclass
class ExecRequest:
    id: int
    api: str
    backend: str
    args: dict[str, ConcreteValue]
    want_outputs: bool = False


@dataclass
class ExecResult:
    id: int
    status: Status
    error_message: Optional[str] = None
    outputs: Optional[list[ConcreteValue]] = None
    covered_branches: list[str] = field(default_factory=list)
    wall_time_us: int = 0
    signal: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.status is Status.OK


def request_frame(req: ExecRequest) -> dict:
    return {
        "id": req.id,
        "api": req.api,
        "backend": req.backend,
        "args": {k: encode_value(v) for k, v in req.args.items()},
        "want_outputs": req.want_outputs,
    }


def parse_request_frame(doc: dict) -> ExecRequest:
    try:
        args = {k: decode_value(v, DEFAULT_DTYPES, f"$.args.{k}") for k, v in doc["args"].items()}
        return ExecRequest(
            id=int(doc["id"]),
            api=str(doc["api"]),
            backend=str(doc.get("backend", "cpu")),
            args=args,
            want_outputs=bool(doc.get("want_outputs", False)),
        )
    except (KeyError, TypeError, DecodeError) as exc:
        raise ProtocolError(f"malformed request frame: {exc}")


def result_frame(res: ExecResult) -> dict:
    doc: dict = {"id": res.id, "status": res.status.value, "wall_time_us": res.wall_time_us}
    if res.error_message is not None:
        doc["error_message"] = res.error_message
    if res.outputs is not None:
        doc["outputs"] = [encode_value(v) for v in res.outputs]
    if res.covered_branches:
        doc["covered_branches"] = res.covered_branches
    if res.signal is not None:
        doc["signal"] = res.signal
    return doc


def parse_result_frame(doc: dict) -> ExecResult:
    try:
        outputs = None
        if "outputs" in doc:
            outputs = [
                decode_value(v, DEFAULT_DTYPES, f"$.outputs[{i}]")
                for i, v in enumerate(doc["outputs"])
            ]
        return ExecResult(
            id=int(doc["id"]),
            status=Status(doc["status"]),
            error_message=doc.get("error_message"),
            outputs=outputs,
            covered_branches=list(doc.get("covered_branches", [])),
            wall_time_us=int(doc.get("wall_time_us", 0)),
            signal=doc.get("signal"),
        )
    except (KeyError, TypeError, ValueError, DecodeError) as exc:
        raise ProtocolError(f"malformed result frame: {exc}")


# ---------------------------------------------------------------------------
# In-process execution of reference targets


def execute_reference(req: ExecRequest, die_on_crash: bool = False) -> ExecResult:
    """Run one request against the built-in targets. SimulatedCrash maps to
    status Crash in-process; with die_on_crash the process actually aborts
    (subprocess worker mode), exercising real crash containment upstream."""
    t0 = time.perf_counter_ns()
    branches: list[str] = []
    seen: set[str] = set()

    def br(label: str) -> None:
        if label not in seen:
            seen.add(label)
            branches.append(label)

    def done(status: Status, **kw) -> ExecResult:
        return ExecResult(
            id=req.id,
            status=status,
            covered_branches=branches,
            wall_time_us=(time.perf_counter_ns() - t0) // 1000,
            **kw,
        )

    try:
        target = get_target(req.api)
    except UnknownApi as exc:
        return done(Status.ERROR, error_message=str(exc))
    try:
        if target.crash_check is not None:
            target.crash_check(req.args)
        target.validate(req.args, br)
        outputs = target.compute(req.args, req.backend, br)
    except SimulatedCrash as crash:
        if die_on_crash:
            sys.stdout.flush()
            os.kill(os.getpid(), crash.signum)
        return done(Status.CRASH, error_message=crash.detail, signal=crash.signum)
    except TargetError as err:
        return done(Status.ERROR, error_message=err.message)
    return done(Status.OK, outputs=outputs if req.want_outputs else None)


class InProcessExecutor:
    """Direct executor over the reference targets; values never serialize."""

    def __init__(self):
        self._next_id = 0

    def backends(self) -> list[str]:
        return ["cpu", "gpu"]

    def run_input(
        self, inp: ApiInput, backend: str = "cpu", want_outputs: bool = False
    ) -> ExecResult:
        self._next_id += 1
        req = ExecRequest(
            id=self._next_id,
            api=inp.api,
            backend=backend,
            args=inp.as_dict(),
            want_outputs=want_outputs,
        )
        return execute_reference(req)

    def run(self, req: ExecRequest) -> ExecResult:
        return execute_reference(req)

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# Subprocess harness


def serve(registry: Optional[Sequence[ReferenceTarget]] = None, die_on_crash: bool = True) -> None:
    """Worker loop on stdio: handshake, then one response per request line.
    Malformed frames are logged and the connection continues."""
    targets = registry if registry is not None else list_reference_targets()
    hello = {
        "type": "hello",
        "version": PROTOCOL_VERSION,
        "apis": [signature_doc(t.signature) for t in targets],
    }
    sys.stdout.write(json.dumps(hello) + "\n")
    sys.stdout.flush()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = parse_request_frame(json.loads(line))
        except (json.JSONDecodeError, ProtocolError) as exc:
            print(f"protocol error: {exc}", file=sys.stderr)
            continue
        res = execute_reference(req, die_on_crash=die_on_crash)
        sys.stdout.write(json.dumps(result_frame(res)) + "\n")
        sys.stdout.flush()


class SubprocessExecutor:
    """Owns a worker child: spawn, handshake, per-call timeout with
    kill-on-timeout, and respawn after a crash. Child death while a request
    is in flight synthesizes a Crash result carrying the signal."""

    def __init__(self, cmd: Sequence[str], call_timeout_s: float = DEFAULT_CALL_TIMEOUT_S):
        self.cmd = list(cmd)
        self.call_timeout_s = call_timeout_s
        self._proc: Optional[subprocess.Popen] = None
        self._next_id = 0
        self.catalog: list[dict] = []

    # -- child lifecycle -----------------------------------------------------

    def _ensure_child(self) -> subprocess.Popen:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        line = self._read_line(self._proc, timeout_s=10.0)
        if line is None:
            raise ExecutorUnavailable(f"worker {self.cmd} did not complete the handshake")
        try:
            hello = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"bad handshake frame: {exc}")
        if hello.get("type") != "hello" or hello.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"unexpected handshake: {hello!r}")
        self.catalog = hello.get("apis", [])
        return self._proc

    @staticmethod
    def _read_line(proc: subprocess.Popen, timeout_s: float) -> Optional[str]:
        deadline = time.monotonic() + timeout_s
        assert proc.stdout is not None
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([proc.stdout], [], [], min(remaining, 0.2))
            if ready:
                line = proc.stdout.readline()
                if line == "":  # EOF: child died
                    return ""
                return line
            if proc.poll() is not None:
                # flush anything buffered before concluding death
                line = proc.stdout.readline()
                return line if line else ""

    def _kill_child(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    # -- calls ---------------------------------------------------------------

    def run_input(
        self, inp: ApiInput, backend: str = "cpu", want_outputs: bool = False
    ) -> ExecResult:
        self._next_id += 1
        req = ExecRequest(
            id=self._next_id,
            api=inp.api,
            backend=backend,
            args=inp.as_dict(),
            want_outputs=want_outputs,
        )
        return self.run(req)

    def run(self, req: ExecRequest) -> ExecResult:
        proc = self._ensure_child()
        if req.id <= 0:
            self._next_id += 1
            req.id = self._next_id
        else:
            self._next_id = max(self._next_id, req.id)
        assert proc.stdin is not None
        try:
            proc.stdin.write(json.dumps(request_frame(req)) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            return self._synthesize_crash(req)
        line = self._read_line(proc, self.call_timeout_s)
        if line is None:
            self._kill_child()
            return ExecResult(id=req.id, status=Status.TIMEOUT, error_message="call timed out")
        if line == "":
            return self._synthesize_crash(req)
        try:
            res = parse_result_frame(json.loads(line))
        except (json.JSONDecodeError, ProtocolError) as exc:
            self._kill_child()
            raise ProtocolError(f"malformed frame from worker: {exc}")
        if res.id != req.id:
            self._kill_child()
            raise ProtocolError(f"response id {res.id} does not match request id {req.id}")
        return res

    def _synthesize_crash(self, req: ExecRequest) -> ExecResult:
        proc = self._proc
        signum = None
        detail = "worker process died"
        if proc is not None:
            rc = proc.wait()
            if rc is not None and rc < 0:
                signum = -rc
                detail = f"worker killed by signal {signum}"
            elif rc:
                detail = f"worker exited with status {rc}"
        self._proc = None  # respawn lazily on the next call
        return ExecResult(
            id=req.id, status=Status.CRASH, error_message=detail, signal=signum
        )

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.close()
                self._proc.wait(timeout=2)
            except Exception:
                self._kill_child()
        self._proc = None

    def __enter__(self) -> "SubprocessExecutor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def reference_worker_cmd() -> list[str]:
    return [sys.executable, "-m", "invfuzz.executor.worker"]
