"""From one IFS to a short fractal video, frame by frame.

Run with ``python3 demos/fractal_video.py [out.png]``.  Writes a contact sheet.
"""

import sys

import numpy as np

from fractalforge import chaos, filters
from fractalforge.render import Camera, contact_sheet, render_frames, write_frame_png
from fractalforge.video import Easing, ease, render_sequence_clouds, sample_motion_profile

out = sys.argv[1] if len(sys.argv) > 1 else "fractal_video.png"
rng = np.random.default_rng(5)

system = filters.generate_valid("tsf", rng).system
print(f"accepted a {system.n}-map system; selection probabilities {np.round(system.probs, 3)}")

cloud = chaos.normalize_cloud(chaos.chaos_game(system, 20_000, 100, rng))
print("axis variances of the normalised cloud:", np.round(chaos.axis_variances(cloud), 3))

# One motion profile per class: rotation, translation, shear and a sine warp.
profile = sample_motion_profile(rng)
print("easing:", profile.easing.value)
print("rotation (rad):", np.round(profile.rotation, 3))
print("translation:", np.round(profile.translation, 3))

# Sine easing starts and ends slowly.
print("eased time at t = 0, .25, .5, .75, 1:",
      [round(ease(t, Easing.SINE), 4) for t in (0, 0.25, 0.5, 0.75, 1)])

seq = render_sequence_clouds(profile, cloud, 18)
step = [np.abs(b - a).max() for a, b in zip(seq.frames, seq.frames[1:])]
print("largest per-frame coordinate change:", np.round(step, 3))

frames = render_frames(seq.frames, Camera(), splat_radius=1)
print("points drawn per frame:", [f.drawn for f in frames[:6]], "...")
write_frame_png(contact_sheet(frames, cols=6), out)
print("wrote", out)
