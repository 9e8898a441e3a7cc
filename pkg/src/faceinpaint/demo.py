"""Procedural face-like crops for smoke tests and bundled fixtures.

These are cartoon faces (skin ellipse, eyes, brows, nose, mouth, hair) with
seeded variation in geometry and palette; enough structure for overfit
training gates and layout clustering without shipping photographs.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np


def synthetic_face(seed: int, size: int = 64) -> np.ndarray:
    """One uint8 RGB face crop of shape ``size x size x 3``."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size, 3), dtype=np.uint8)

    top = rng.integers(30, 90, size=3)
    bottom = rng.integers(120, 200, size=3)
    ramp = np.linspace(0.0, 1.0, size)[:, None, None]
    img[:] = (top[None, None, :] * (1 - ramp) + bottom[None, None, :] * ramp).astype(np.uint8)

    cx, cy = size // 2, size // 2 + int(rng.integers(-3, 4))
    ax, ay = int(size * rng.uniform(0.28, 0.34)), int(size * rng.uniform(0.36, 0.42))
    skin = tuple(int(v) for v in rng.integers(150, 230, size=3))
    cv2.ellipse(img, (cx, cy), (ax, ay), 0, 0, 360, skin, -1)

    hair = tuple(int(v) for v in rng.integers(20, 90, size=3))
    cv2.ellipse(img, (cx, cy - int(ay * 0.75)), (ax, int(ay * 0.55)), 0, 180, 360, hair, -1)

    eye_dx = int(ax * 0.45)
    eye_y = cy - int(ay * 0.15)
    eye_r = max(2, size // 16)
    for sx in (-1, 1):
        center = (cx + sx * eye_dx, eye_y)
        cv2.circle(img, center, eye_r, (245, 245, 245), -1)
        cv2.circle(img, center, max(1, eye_r // 2), (30, 30, 40), -1)
        brow_y = eye_y - eye_r - max(1, size // 32)
        cv2.line(
            img,
            (center[0] - eye_r, brow_y),
            (center[0] + eye_r, brow_y - int(rng.integers(0, 3))),
            hair,
            max(1, size // 40),
        )

    nose_y = cy + int(ay * 0.12)
    nose = tuple(max(0, c - 30) for c in skin)
    cv2.line(img, (cx, eye_y + eye_r), (cx, nose_y), nose, max(1, size // 40))

    mouth_y = cy + int(ay * 0.45)
    mouth_w = int(ax * rng.uniform(0.4, 0.6))
    mouth = (int(rng.integers(120, 190)), int(rng.integers(30, 80)), int(rng.integers(40, 90)))
    cv2.ellipse(img, (cx, mouth_y), (mouth_w, max(2, size // 20)), 0, 0, 180, mouth, -1)
    return img


def write_face_set(out_dir: str | Path, n: int = 8, size: int = 64, seed: int = 0) -> list[Path]:
    """Write ``n`` face PNGs named ``face_00.png`` and so on."""
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        path = out / f"face_{i:02d}.png"
        Image.fromarray(synthetic_face(seed + i, size), mode="RGB").save(path, format="PNG")
        paths.append(path)
    return paths
