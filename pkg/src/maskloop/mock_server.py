"""In-process mock of the remote services, backed by local oracles.

The mock serves the same three endpoints real services would and needs a
task set to ground itself: /v1/segment identifies the task by the exact
PGM bytes, while /v1/act and /v1/score recover the current mask from the
overlay composite (unmasked pixels replicate the gray value, masked ones
match an exact re-render) and then answer with the expert click and the
true IoU respectively. Matching fails with 400 for images outside the
task set.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import io
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

import numpy as np

from .env import Action, Task
from .errors import PnmError
from .expert import next_click
from .policy import PromptConfig, format_action, miou_percent
from .raster import (
    BitMask,
    NormBox,
    RgbImage,
    iou,
    render_overlay,
    rle_encode,
)
from .segmenters import oracle_segment

log = logging.getLogger(__name__)


class MockRequestError(ValueError):
    """Bad request payload; mapped to HTTP 400."""


class MockService:
    """Protocol logic without the HTTP plumbing (handy for tests)."""

    def __init__(
        self,
        tasks: Sequence[Task],
        prompt_config: PromptConfig = PromptConfig(),
        r_neg: int = 2,
    ):
        if not tasks:
            raise ValueError("mock service needs at least one task")
        self.tasks = list(tasks)
        self.prompt_config = prompt_config
        self.r_neg = r_neg
        self._by_pgm: dict[str, Task] = {}
        for task in self.tasks:
            self._by_pgm[_pgm_digest(task)] = task

    # -- endpoint handlers ------------------------------------------------

    def segment(self, payload: dict) -> dict:
        pgm = _b64_bytes(payload, "image_pgm_b64")
        task = self._by_pgm.get(hashlib.sha256(pgm).hexdigest())
        if task is None:
            raise MockRequestError("unknown image")
        clicks = _parse_clicks(payload.get("clicks", []))
        box = _parse_box(payload.get("box"))
        mask = oracle_segment(task.target, clicks, box, r_neg=self.r_neg)
        return {"mask_rle": rle_encode(mask).to_dict()}

    def act(self, payload: dict) -> dict:
        n = payload.get("n_samples", 1)
        if not isinstance(n, int) or n < 1:
            raise MockRequestError(f"bad n_samples: {n!r}")
        task, mask = self._match_composite(_decode_ppm(_b64_bytes(payload, "image_ppm_b64")))
        pct = miou_percent(iou(mask, task.target))
        action = next_click(mask, task.target)
        if action is None:
            text = f"Current mIoU: {pct}"
        else:
            text = f"Current mIoU: {pct}\n{format_action(action, self.prompt_config.coord_format)}"
        return {"texts": [text] * n}

    def score(self, payload: dict) -> dict:
        task, mask = self._match_composite(_decode_ppm(_b64_bytes(payload, "image_ppm_b64")))
        return {"text": f"Current mIoU: {miou_percent(iou(mask, task.target))}"}

    def handle(self, path: str, payload: dict) -> dict:
        if path == "/v1/segment":
            return self.segment(payload)
        if path == "/v1/act":
            return self.act(payload)
        if path == "/v1/score":
            return self.score(payload)
        raise MockRequestError(f"unknown endpoint {path}")

    # -- composite matching ------------------------------------------------

    def _match_composite(self, composite: RgbImage) -> tuple[Task, BitMask]:
        """Find the (task, mask) whose overlay renders to these exact bytes."""
        ch, cw = composite.data.shape[:2]
        for task in self.tasks:
            if task.image.shape != (ch, cw):
                continue
            gray3 = np.stack([task.image.data] * 3, axis=-1)
            candidate = BitMask((composite.data != gray3).any(axis=2))
            rendered = render_overlay(
                task.image, candidate, self.prompt_config.mask_color, self.prompt_config.alpha
            )
            if np.array_equal(rendered.data, composite.data):
                return task, candidate
        raise MockRequestError("composite does not match any known task")


def _pgm_digest(task: Task) -> str:
    h, w = task.image.shape
    buf = io.BytesIO()
    buf.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
    buf.write(task.image.data.tobytes())
    return hashlib.sha256(buf.getvalue()).hexdigest()


def _b64_bytes(payload: dict, key: str) -> bytes:
    raw = payload.get(key)
    if not isinstance(raw, str):
        raise MockRequestError(f"missing {key}")
    try:
        return base64.b64decode(raw, validate=True)
    except (binascii.Error, ValueError):
        raise MockRequestError(f"{key} is not valid base64")


def _decode_ppm(buf: bytes) -> RgbImage:
    from .raster import _parse_pnm_header  # shared parser

    try:
        w, h, _, pos = _parse_pnm_header(buf, b"P6", "<payload>")
    except PnmError as e:
        raise MockRequestError(str(e))
    body = buf[pos : pos + 3 * w * h]
    if len(body) != 3 * w * h:
        raise MockRequestError("truncated PPM payload")
    return RgbImage(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3))


def _parse_clicks(items: object) -> list[Action]:
    if not isinstance(items, list):
        raise MockRequestError("clicks must be a list")
    clicks: list[Action] = []
    for item in items:
        try:
            sign = item["sign"]
            x = float(item["x"])
            y = float(item["y"])
        except (KeyError, TypeError, ValueError):
            raise MockRequestError(f"bad click {item!r}")
        if sign not in (1, -1):
            raise MockRequestError(f"bad click sign {sign!r}")
        try:
            clicks.append(Action.positive(x, y) if sign == 1 else Action.negative(x, y))
        except ValueError as e:
            raise MockRequestError(str(e))
    return clicks


def _parse_box(obj: object) -> NormBox | None:
    if obj is None:
        return None
    try:
        return NormBox(float(obj["x1"]), float(obj["y1"]), float(obj["x2"]), float(obj["y2"]))
    except (KeyError, TypeError, ValueError) as e:
        raise MockRequestError(f"bad box: {e}")


class _Handler(BaseHTTPRequestHandler):
    service: MockService  # set by serve()

    def do_POST(self):  # noqa: N802 (http.server naming)
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(payload, dict):
                raise MockRequestError("payload must be a JSON object")
            reply = self.service.handle(self.path, payload)
        except MockRequestError as e:
            self._send(400, {"error": str(e)})
            return
        except json.JSONDecodeError:
            self._send(400, {"error": "invalid JSON"})
            return
        except Exception as e:  # pragma: no cover - defensive
            log.exception("mock server error")
            self._send(500, {"error": str(e)})
            return
        self._send(200, reply)

    def _send(self, status: int, obj: dict) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):  # quiet by default
        log.debug("mock http: " + fmt, *args)


def serve(
    tasks: Sequence[Task],
    port: int = 0,
    prompt_config: PromptConfig = PromptConfig(),
    r_neg: int = 2,
) -> tuple[ThreadingHTTPServer, threading.Thread]:
    """Start the mock server on a daemon thread; returns (server, thread).

    Port 0 picks a free port; read it back from server.server_address.
    Call server.shutdown() when done.
    """
    service = MockService(tasks, prompt_config, r_neg)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
