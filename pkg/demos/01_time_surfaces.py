"""
Events and time surfaces
========================

A time surface turns the recent history around an event into a fixed-size
vector: each cell holds exp(-(t - T) / tau), where T is the last time that
cell fired and t is the current event time.
"""

import numpy as np

from sup3r.events import Event, TimestampStore, global_time_vector, local_time_surface, tile_time_surface

# A 5x5 sensor with one polarity. Three events arrive at 0, 50 and 100 us.
store = TimestampStore((5, 5), 1)
for t, y, x in [(0, 2, 3), (50, 1, 1), (100, 2, 2)]:
    ev = Event(t, (y, x), 0)
    store.record(ev)

# The surface around the newest event: its own cell is 1, the neighbour that
# fired 100 us earlier has decayed to exp(-1) with tau = 100 us.
ts = local_time_surface(store, ev, 3, tau=100.0)
print("3x3 surface around (2, 2):")
print(np.round(ts.reshape(3, 3), 3))

# Tiles read a fixed block instead of a centred window. The block holding
# (2, 2) at tile size 2 spans rows 2-3 and columns 2-3.
print("tile surface:")
print(np.round(tile_time_surface(store, ev, 2, tau=100.0).reshape(2, 2), 3))

# Global layers look at every cell of their input at once.
line = TimestampStore((4,), 2)
line.record(Event(10, (1,), 0))
line.record(Event(30, (3,), 1))
print("global vector (cell-major, polarity fastest):", np.round(global_time_vector(line, Event(30, (3,), 1), 20.0), 3))
