"""Composite a vertical wire fence onto scikit-image's motorcycle stereo pair.

The pair is halved in size (scene disparities become roughly 3 to 30 px) and
wires are drawn at a constant disparity of FENCE_DISPARITY px, so the fence is
the nearest layer. PITCH exceeds FENCE_DISPARITY and their sum exceeds the
default d_max of 64, so no shifted copy of the wire pattern falls inside the
disparity search range. Output is deterministic.
"""

import pathlib

import numpy as np
from PIL import Image
from skimage import data

FENCE_DISPARITY = 48
PITCH = 52
WIRE = 6
OUT = pathlib.Path(__file__).resolve().parent


def wire_profile(width):
    # brighter wire centre, darker rim
    t = (np.arange(width) + 0.5) / width
    return 0.10 + 0.12 * np.sin(np.pi * t)


def add_fence(img, shift):
    h, w, _ = img.shape
    out = img.copy()
    prof = wire_profile(WIRE)
    rows = np.linspace(0.9, 1.1, h)[:, None]
    phase = FENCE_DISPARITY + max(0, (PITCH - WIRE - FENCE_DISPARITY) // 2)
    for c in range(w):
        k = (c + shift - phase) % PITCH
        if k < WIRE:
            out[:, c, :] = (prof[k] * rows).clip(0, 1)
    return out


def main():
    left, right, _ = data.stereo_motorcycle()
    pair = []
    for im in (left, right):
        h, w = im.shape[0] // 2, im.shape[1] // 2
        small = Image.fromarray(im).resize((w, h), Image.LANCZOS)
        pair.append(np.asarray(small, dtype=np.float64) / 255.0)
    fenced_left = add_fence(pair[0], 0)
    fenced_right = add_fence(pair[1], FENCE_DISPARITY)
    for name, im in (("left", fenced_left), ("right", fenced_right)):
        Image.fromarray((im * 255.0 + 0.5).astype(np.uint8)).save(OUT / f"motorcycle_fenced_{name}.png")


if __name__ == "__main__":
    main()
