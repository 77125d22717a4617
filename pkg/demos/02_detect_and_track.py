"""
Detecting and tracking stationary cars
======================================

A hot-region detector proposes boxes in every frame. The tracker links boxes
across frames and keeps tracks that stay put for three minutes.
"""

from idlecar import thermosim as ts
from idlecar.detect import detect_sequence, iou
from idlecar.track import build_tracks, filter_stationary

car = ts.sample_car_params(5, car_id="car05")
for view in ("front", "side", "rear"):
    seq, ann = ts.synthesize_sequence(car, ts.SceneParams(), view, "stopped", seed=2)
    per_frame = detect_sequence(seq)
    tracks = build_tracks(per_frame)
    cars = filter_stationary(tracks)
    print(f"{view:5s}: {sum(map(len, per_frame.values()))} detections, {len(tracks)} tracks, {len(cars)} stationary")
    for c in cars:
        print(f"       frames {c.start_frame}-{c.end_frame}  score {c.mean_score:.2f}  IoU vs annotation {iou(c.avg_box, ann.box):.3f}")

# a 30-frame clip is too short to count as a stationary car
short = seq.temps[:30]
seq.temps = short
print("30-frame clip:", len(filter_stationary(build_tracks(detect_sequence(seq)))), "stationary cars")
