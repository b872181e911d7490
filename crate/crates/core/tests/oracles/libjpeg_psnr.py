"""Regenerates the libjpeg PSNR goldens used by the JPEG tests.

Usage: cargo test -p genbench-core --test jpeg_reference dump_fixture -- --ignored
       python3 crates/core/tests/oracles/libjpeg_psnr.py /tmp/fixture.png
"""
import io
import sys

import numpy as np
from PIL import Image

img = Image.open(sys.argv[1])
src = np.asarray(img).astype(float)
for quality in (50, 70, 90):
    for subsampling, label in ((2, "Yuv420"), (0, "Yuv444")):
        buf = io.BytesIO()
        img.save(buf, "JPEG", quality=quality, subsampling=subsampling)
        buf.seek(0)
        out = np.asarray(Image.open(buf)).astype(float)
        mse = ((src - out) ** 2).mean()
        print(f"({quality}, ChromaSubsampling::{label}, {10 * np.log10(255 ** 2 / mse):.4f}),")
