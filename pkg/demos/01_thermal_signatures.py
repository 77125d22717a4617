"""
Thermal signatures of idling and stopped cars
=============================================

Each synthetic car has five surface regions that relax toward a per-state
equilibrium. Printing the traces side by side shows which regions carry the
engine state.
"""

import numpy as np

from idlecar import thermosim as ts
from idlecar.irdata import box_max_trace

car = ts.sample_car_params(3, car_id="car03")
t = np.arange(0, 300, 60.0)  # one sample per minute over five minutes

print("minute " + " ".join(f"{m:6.0f}" for m in t / 60))
for region in ts.REGIONS:
    for state in ts.STATES:
        trace = ts.region_temperature(t, region, state, car)
        print(f"{region:8s} {state:8s} " + " ".join(f"{v:6.1f}" for v in trace))

# a stopped hood heats up before it cools; the peak time has a closed form
hood = car.regions["hood"]
print("stopped hood soak peak after %.0f s" % ts.soak_peak_time(hood.tau1, hood.tau2))

# render one rear-view sequence and look at the hottest pixel in the car box
seq, ann = ts.synthesize_sequence(car, ts.SceneParams(), "rear", "idling", seed=1)
trace = box_max_trace(seq, ann.box)
print("rear idling box max, every 12th frame:", np.round(trace[::12], 1))
