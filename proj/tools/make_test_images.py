"""Regenerates the natural test images from scikit-image's bundled samples.

tests/data/natural/ holds unclipped 128x128 crops: no 8-bit level covers more
than 2% of any channel. tests/data/clipped/ holds center crops with large
saturated or flat regions.

Sources: astronaut (public domain), coffee and chelsea (CC0),
immunohistochemistry (no known copyright restrictions).
"""
import pathlib

import numpy as np
import skimage.data
from PIL import Image

DATA = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"

# name -> (top, left, side) of the square crop, resized to 128x128.
UNCLIPPED = {
    "astronaut": (352, 96, 128),
    "chelsea": (0, 160, 128),
    "immunohistochemistry": (192, 64, 128),
}
CLIPPED = ("astronaut", "coffee")


def largest_level_fraction(img: np.ndarray) -> float:
    return max(np.unique(img[..., c], return_counts=True)[1].max() for c in range(3)) / img[..., 0].size


def crop(name: str, top: int, left: int, side: int) -> Image.Image:
    img = Image.fromarray(getattr(skimage.data, name)()[..., :3])
    return img.crop((left, top, left + side, top + side)).resize((128, 128), Image.LANCZOS)


def main() -> None:
    (DATA / "natural").mkdir(parents=True, exist_ok=True)
    (DATA / "clipped").mkdir(parents=True, exist_ok=True)
    for name, (top, left, side) in UNCLIPPED.items():
        img = crop(name, top, left, side)
        assert largest_level_fraction(np.asarray(img)) < 0.02, name
        img.save(DATA / "natural" / f"{name}.png")
    for name in CLIPPED:
        full = getattr(skimage.data, name)()
        side = min(full.shape[:2])
        img = crop(name, (full.shape[0] - side) // 2, (full.shape[1] - side) // 2, side)
        img.save(DATA / "clipped" / f"{name}.png")


if __name__ == "__main__":
    main()
