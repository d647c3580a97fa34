"""Downscale the public-domain / CC0 sample images shipped with scikit-image
into data/stills/, used as sources for the natural sample clips."""

from pathlib import Path

import skimage.data
from PIL import Image

NAMES = ["astronaut", "chelsea", "coffee", "rocket", "hubble_deep_field"]
SHORT_SIDE = 256


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "data" / "stills"
    out.mkdir(parents=True, exist_ok=True)
    for name in NAMES:
        img = Image.fromarray(getattr(skimage.data, name)())
        scale = SHORT_SIDE / min(img.size)
        size = (round(img.width * scale), round(img.height * scale))
        img.resize(size, Image.LANCZOS).save(out / f"{name}.png")


if __name__ == "__main__":
    main()
