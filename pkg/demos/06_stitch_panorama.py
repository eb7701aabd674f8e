"""Pinhole-to-panorama stitching, checked by dual rendering.

The same synthetic scene is rendered (a) directly to an equirectangular
label panorama and (b) through six 90-degree pinhole views that are then
stitched back together. The two label images agree except at resampling
boundaries.
"""

from pathlib import Path

import numpy as np

from panobev.datagen import (
    SceneConfig,
    cubemap_rig,
    render_pinhole_view,
    stitch_views,
    synth_scene,
    three_ring_rig,
)
from panobev.rasters import write_label
from panobev.vocab import load_vocabulary

out_dir = Path(__file__).parent / "demo_output"
out_dir.mkdir(exist_ok=True)

scene = synth_scene(seed=2, config=SceneConfig(height=128, width=256))
vocab = load_vocabulary(scene.config.vocabulary)

views = [render_pinhole_view(scene, entry) for entry in cubemap_rig(160)]
pano, coverage = stitch_views(views, 128, 256, payload="label")
agree = (pano[coverage] == scene.labels[coverage]).mean()
print(f"cubemap (6 views): coverage {coverage.mean() * 100:.1f}%, "
      f"label agreement {agree * 100:.2f}%")

# An 18-view rig (6 azimuths x high/medium/low) leaves the poles dark.
rig = three_ring_rig(128)
views18 = [render_pinhole_view(scene, entry) for entry in rig]
pano18, coverage18 = stitch_views(views18, 128, 256, payload="label")
agree18 = (pano18[coverage18] == scene.labels[coverage18]).mean()
print(f"three-ring rig (18 views): coverage {coverage18.mean() * 100:.1f}%, "
      f"label agreement {agree18 * 100:.2f}%")

write_label(out_dir / "stitched.png", pano.astype(np.uint8), palette=vocab.palette)
write_label(out_dir / "stitched_18view.png", pano18.astype(np.uint8), palette=vocab.palette)
write_label(out_dir / "direct.png", scene.labels.astype(np.uint8), palette=vocab.palette)
print(f"wrote direct.png, stitched.png, stitched_18view.png to {out_dir}")
