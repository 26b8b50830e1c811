"""Client side of the out-of-process learner protocol.

Requests and replies are single JSON lines over the child's stdin/stdout:

    {"cmd": "fit", "id": 1, "X": [[...]], "y": [...], "mask": [...],
     "seed": 7, "hyperparams": {...}}      -> {"id": 1, "ok": true}
    {"cmd": "predict", "id": 2, "X": [[...]]} -> {"id": 2, "yhat": [...]}
    {"cmd": "shutdown"}                       (no reply; process exits)

One process serves one fitted model.  Exactly one request is in flight at a
time, and every reply must carry the request's id.  Failures raise
ProtocolError with the recent message transcript attached for diagnosis.
"""

from __future__ import annotations

import collections
import json
import os
import selectors
import subprocess
import tempfile
import time

import numpy as np

_MAX_LINE = 64 * 1024 * 1024
_SNIPPET = 300  # transcript entries are truncated to this many chars


class ProtocolError(RuntimeError):
    def __init__(self, message: str, transcript=()):
        self.transcript = tuple(transcript)
        if self.transcript:
            tail = "\n".join("  %s %s" % (d, t) for d, t in self.transcript)
            message = "%s\nrecent protocol traffic:\n%s" % (message, tail)
        super().__init__(message)


class ProtocolClient:
    """Spawns the learner command and speaks the line protocol to it."""

    def __init__(self, cmd, timeout: float = 300.0):
        if not cmd:
            raise ValueError("empty learner command")
        self.cmd = tuple(cmd)
        self.timeout = timeout
        self._transcript = collections.deque(maxlen=8)
        self._next_id = 1
        self._buf = b""
        self._closed = False
        self._stderr = tempfile.TemporaryFile()
        try:
            self._proc = subprocess.Popen(
                list(cmd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=self._stderr,
            )
        except OSError as exc:
            raise ProtocolError("cannot launch %r: %s" % (" ".join(cmd), exc))
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._proc.stdout, selectors.EVENT_READ)
        os.set_blocking(self._proc.stdout.fileno(), False)

    def request(self, msg: dict) -> dict:
        msg = dict(msg)
        msg["id"] = self._next_id
        self._next_id += 1
        self._send(msg)
        reply = self._read_reply()
        if reply.get("id") != msg["id"]:
            raise self._fail(
                "reply id %r does not match request id %r"
                % (reply.get("id"), msg["id"])
            )
        return reply

    def fit(self, X, y, mask_bits, seed: int, hyperparams: dict) -> None:
        reply = self.request(
            {
                "cmd": "fit",
                "X": np.asarray(X, dtype=float).tolist(),
                "y": np.asarray(y, dtype=float).tolist(),
                "mask": [int(b) for b in mask_bits],
                "seed": int(seed),
                "hyperparams": dict(hyperparams),
            }
        )
        if not reply.get("ok"):
            raise self._fail("fit failed: %s" % reply.get("error", "no reason given"))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        reply = self.request({"cmd": "predict", "X": X.tolist()})
        if "yhat" not in reply:
            raise self._fail("predict failed: %s" % reply.get("error", "no yhat"))
        yhat = np.asarray(reply["yhat"], dtype=float)
        if yhat.shape != (X.shape[0],):
            raise self._fail(
                "predict returned %d values for %d rows" % (yhat.size, X.shape[0])
            )
        if not np.all(np.isfinite(yhat)):
            raise self._fail("predict returned non-finite values")
        return yhat

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            if self._proc.poll() is None:
                self._send({"cmd": "shutdown"}, best_effort=True)
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                    self._proc.wait()
        finally:
            self._sel.close()
            for stream in (self._proc.stdin, self._proc.stdout):
                if stream:
                    stream.close()
            self._stderr.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _send(self, msg: dict, best_effort: bool = False) -> None:
        line = json.dumps(msg)
        self._transcript.append((">", _snip(line)))
        try:
            self._proc.stdin.write(line.encode() + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            if not best_effort:
                raise self._fail("learner process closed its input")

    def _read_reply(self) -> dict:
        deadline = time.monotonic() + self.timeout
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line, self._buf = self._buf[:nl], self._buf[nl + 1 :]
                text = line.decode("utf-8", errors="replace").strip()
                self._transcript.append(("<", _snip(text)))
                if not text:
                    continue
                try:
                    reply = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise self._fail("unparseable reply: %s" % exc)
                if not isinstance(reply, dict):
                    raise self._fail("reply is not a JSON object")
                return reply
            if len(self._buf) > _MAX_LINE:
                raise self._fail("reply exceeds %d bytes" % _MAX_LINE)
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise self._fail("timed out after %.0f s waiting for reply" % self.timeout)
            if self._sel.select(timeout=min(remaining, 0.5)):
                chunk = self._proc.stdout.read(1 << 16)
                if chunk:
                    self._buf += chunk
                elif chunk == b"":
                    raise self._fail("learner process closed its output")
            elif self._proc.poll() is not None and not self._buf:
                raise self._fail("learner process exited with code %s" % self._proc.returncode)

    def _fail(self, message: str) -> ProtocolError:
        stderr_tail = self._stderr_tail()
        if stderr_tail:
            message = "%s\nlearner stderr (tail):\n%s" % (message, stderr_tail)
        err = ProtocolError(message, self._transcript)
        try:
            if self._proc.poll() is None:
                self._proc.kill()
                self._proc.wait(timeout=5)  # reap; no zombies on failure paths
        except Exception:
            pass
        return err

    def _stderr_tail(self, limit: int = 2000) -> str:
        try:
            self._stderr.flush()
            size = self._stderr.tell()
            self._stderr.seek(max(0, size - limit))
            return self._stderr.read().decode("utf-8", errors="replace").strip()
        except Exception:
            return ""


def _snip(text: str) -> str:
    return text if len(text) <= _SNIPPET else text[:_SNIPPET] + "...[%d chars]" % len(text)


class ExternalModel:
    """Adapter giving a ProtocolClient the fit/predict surface learner.fit expects."""

    def __init__(self, spec):
        self._client = ProtocolClient(spec.external_cmd, spec.timeout)
        self._spec = spec
        self._fitted = False

    def fit(self, X, y, mask_bits) -> None:
        # the full matrix goes over the wire; the server enforces the mask
        self._client.fit(X, y, mask_bits, self._spec.seed, self._spec.hyperparams)
        self._fitted = True

    def predict(self, X) -> np.ndarray:
        if not self._fitted:
            raise ProtocolError("predict before fit")
        return self._client.predict(X)

    def close(self) -> None:
        self._client.close()
