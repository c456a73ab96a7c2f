"""Wire protocol client for remote segmenters, policies, and scorers.

Three JSON-over-HTTP endpoints:

  POST /v1/segment  {image_pgm_b64, clicks: [{sign, x, y}], box?}
                    -> {mask_rle: {size: [h, w], counts: [...]}}
  POST /v1/act      {image_ppm_b64, prompt, n_samples} -> {texts: [...]}
  POST /v1/score    {image_ppm_b64, prompt} -> {text: "Current mIoU: NN"}

Images travel base64-encoded in their PGM/PPM container bytes.
Coordinates are normalized decimals rounded to 6 digits. Transport
failures and HTTP 5xx are retried up to max_retries; 4xx and protocol
violations fail immediately.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass
from typing import Sequence

import requests

from .errors import ProtocolError, RemoteError
from .raster import (
    BitMask,
    GrayImage,
    NormBox,
    RgbImage,
    RleMask,
    rle_decode,
)


@dataclass(frozen=True)
class RemoteEndpoint:
    """Where a service lives and how patient to be with it."""

    base_url: str
    timeout: float = 10.0
    max_retries: int = 2

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url may not be empty")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")


def _pgm_bytes(image: GrayImage) -> bytes:
    h, w = image.shape
    buf = io.BytesIO()
    buf.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
    buf.write(image.data.tobytes())
    return buf.getvalue()


def _ppm_bytes(image: RgbImage) -> bytes:
    h, w = image.data.shape[:2]
    buf = io.BytesIO()
    buf.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
    buf.write(image.data.tobytes())
    return buf.getvalue()


def image_to_pgm_b64(image: GrayImage) -> str:
    return base64.b64encode(_pgm_bytes(image)).decode("ascii")


def image_to_ppm_b64(image: RgbImage) -> str:
    return base64.b64encode(_ppm_bytes(image)).decode("ascii")


def _post(endpoint: RemoteEndpoint, path: str, payload: dict) -> dict:
    url = endpoint.base_url.rstrip("/") + path
    last_error: Exception | None = None
    for _ in range(endpoint.max_retries + 1):
        try:
            resp = requests.post(url, json=payload, timeout=endpoint.timeout)
        except requests.RequestException as e:
            last_error = RemoteError(f"POST {url} failed: {e}")
            continue
        if resp.status_code >= 500:
            last_error = RemoteError(f"POST {url} -> {resp.status_code}")
            continue
        if resp.status_code >= 400:
            raise RemoteError(f"POST {url} -> {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError:
            raise ProtocolError(f"POST {url}: non-JSON reply")
        if not isinstance(body, dict):
            raise ProtocolError(f"POST {url}: reply is not a JSON object")
        return body
    raise last_error if last_error is not None else RemoteError(f"POST {url} failed")


def _click_payload(clicks: Sequence) -> list[dict]:
    out = []
    for a in clicks:
        if not a.is_click:
            continue
        out.append({"sign": a.sign, "x": round(a.point.x, 6), "y": round(a.point.y, 6)})
    return out


def _box_payload(box: NormBox | None) -> dict | None:
    if box is None:
        return None
    return {
        "x1": round(box.x1, 6),
        "y1": round(box.y1, 6),
        "x2": round(box.x2, 6),
        "y2": round(box.y2, 6),
    }


def call_segment(
    endpoint: RemoteEndpoint,
    image: GrayImage,
    clicks: Sequence,
    box: NormBox | None = None,
) -> BitMask:
    """Ask the remote segmenter for a mask; dimensions must match the image."""
    payload: dict = {
        "image_pgm_b64": image_to_pgm_b64(image),
        "clicks": _click_payload(clicks),
    }
    b = _box_payload(box)
    if b is not None:
        payload["box"] = b
    body = _post(endpoint, "/v1/segment", payload)
    try:
        rle = RleMask.from_dict(body["mask_rle"])
    except (KeyError, TypeError) as e:
        raise ProtocolError(f"segment reply missing mask_rle: {e}")
    except ValueError as e:
        raise ProtocolError(f"segment reply carries bad rle: {e}")
    if rle.size != image.shape:
        raise ProtocolError(f"segment reply sized {rle.size}, image is {image.shape}")
    return rle_decode(rle)


def call_policy(endpoint: RemoteEndpoint, composite: RgbImage, prompt: str, k: int) -> list[str]:
    """Sample k action texts for an overlay image; returns raw strings."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    body = _post(
        endpoint,
        "/v1/act",
        {"image_ppm_b64": image_to_ppm_b64(composite), "prompt": prompt, "n_samples": k},
    )
    texts = body.get("texts")
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        raise ProtocolError("act reply must carry a list of strings under 'texts'")
    return texts


def call_prm(endpoint: RemoteEndpoint, composite: RgbImage, prompt: str) -> float:
    """Ask the remote scorer to rate an overlay; returns a [0, 1] ratio."""
    from .policy import parse_stated_miou  # local import to avoid a cycle

    body = _post(
        endpoint,
        "/v1/score",
        {"image_ppm_b64": image_to_ppm_b64(composite), "prompt": prompt},
    )
    text = body.get("text")
    if not isinstance(text, str):
        raise ProtocolError("score reply must carry a string under 'text'")
    return parse_stated_miou(text)
