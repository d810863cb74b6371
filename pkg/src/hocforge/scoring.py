"""Placement likelihood scorers: a deterministic heuristic and a client for
external learned scorers.

External scorers speak newline-delimited JSON over the stdio of a spawned
subprocess or a TCP socket: one request object per line
(``{"id": n, "png_b64": ...}``), one response per line (``{"id": n,
"score": s}`` or ``{"id": n, "error": msg}``).  Responses may arrive out
of order; ids pair them with requests.
"""

from __future__ import annotations

import base64
import json
import math
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass

from .datasetio import png_bytes
from .errors import ProtocolError, ScorerTimeout
from .imaging import ImageBuffer

OCCLUSION_CUTOFF = 0.8  # mirrors the dataset's export threshold
OCCLUSION_FALLOFF = 0.3
CONTACT_SATURATION = 0.05


@dataclass
class ScoreRequest:
    """Tight-bbox crop of the candidate scene plus placement metadata."""

    crop: ImageBuffer
    k: int  # ordinal of the instance being placed (1-based)
    occlusion_new: float
    contact_ratio: float


@dataclass
class Score:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"score {self.value} outside [0, 1]")


def heuristic_score(request: ScoreRequest) -> Score:
    """Deterministic stand-in for a learned realism classifier.

    Rewards placements that touch the existing cluster and punishes heavy
    occlusion, with a hard zero at the export cutoff.
    """
    occ = request.occlusion_new
    if occ >= OCCLUSION_CUTOFF:
        return Score(0.0)
    s_occ = math.exp(-((occ / OCCLUSION_FALLOFF) ** 2))
    if request.k > 1:
        s_contact = min(1.0, request.contact_ratio / CONTACT_SATURATION)
    else:
        s_contact = 1.0
    return Score(s_occ * s_contact)


class ScorerClient:
    """Connection to an external scorer over subprocess stdio or TCP.

    One client is used by one worker at a time; a background thread reads
    response lines so pipelined and out-of-order replies are handled.
    """

    def __init__(self, command: str | None = None, address: str | None = None,
                 timeout: float = 10.0):
        if bool(command) == bool(address):
            raise ValueError("provide exactly one of command or address")
        self.timeout = timeout
        self._next_id = 0
        self._responses: dict[int, dict] = {}
        self._lock = threading.Condition()
        self._broken: str | None = None
        self._proc = None
        self._sock = None

        if command is not None:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
            self._writer = self._proc.stdin
            reader = self._proc.stdout
        else:
            host, _, port = address.rpartition(":")
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            stream = self._sock.makefile("rw", encoding="utf-8", newline="\n")
            self._writer = stream
            reader = stream

        self._reader_thread = threading.Thread(
            target=self._read_loop, args=(reader,), daemon=True
        )
        self._reader_thread.start()

    def _read_loop(self, reader):
        try:
            for line in reader:
                line = line.strip()
                if not line:
                    continue
                try:
                    frame = json.loads(line)
                    rid = int(frame["id"])
                except (ValueError, TypeError, KeyError):
                    with self._lock:
                        self._broken = f"undecodable response line: {line[:200]!r}"
                        self._lock.notify_all()
                    return
                with self._lock:
                    self._responses[rid] = frame
                    self._lock.notify_all()
        except (OSError, ValueError):
            pass
        with self._lock:
            if self._broken is None:
                self._broken = "scorer stream closed"
            self._lock.notify_all()

    def submit(self, png: bytes) -> int:
        request_id = self._next_id
        self._next_id += 1
        payload = json.dumps(
            {"id": request_id, "png_b64": base64.b64encode(png).decode("ascii")}
        )
        try:
            self._writer.write(payload + "\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise ProtocolError(f"failed to send request: {exc}") from exc
        return request_id

    def wait(self, request_id: int) -> float:
        deadline = time.monotonic() + self.timeout
        with self._lock:
            while request_id not in self._responses:
                if self._broken is not None:
                    raise ProtocolError(self._broken)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ScorerTimeout(
                        f"no response for id {request_id} within {self.timeout}s"
                    )
                self._lock.wait(remaining)
            frame = self._responses.pop(request_id)
        if "error" in frame:
            raise ProtocolError(f"scorer error for id {request_id}: {frame['error']}")
        if "score" not in frame:
            raise ProtocolError(f"response for id {request_id} has no score")
        score = frame["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolError(f"score for id {request_id} is not a number")
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise ProtocolError(f"score {score} for id {request_id} outside [0, 1]")
        return score

    def score(self, png: bytes) -> float:
        return self.wait(self.submit(png))

    def close(self):
        try:
            self._writer.close()
        except (OSError, ValueError):
            pass
        if self._proc is not None:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_score(request: ScoreRequest, client: ScorerClient) -> Score:
    """Send the crop over the wire; only the pixels travel, not metadata."""
    return Score(client.score(png_bytes(request.crop)))
