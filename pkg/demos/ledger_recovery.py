"""
What a torn write looks like, and why nobody downstream notices
===============================================================

Every topic is a sequence of checksummed frames in append-only segment
files.  A crash mid-write leaves a torn frame at the tail; on the next
open the ledger keeps every complete frame and discards the tail, so a
reader sees a clean prefix of what was acknowledged -- never garbage.

    python3 demos/ledger_recovery.py
"""

import shutil
import tempfile
from pathlib import Path

from fleetstream.broker import Broker
from fleetstream.core import parse_topic_name
from fleetstream.ledger import FRAME_OVERHEAD

root = Path(tempfile.mkdtemp(prefix="fleetstream-demo-"))
topic = parse_topic_name("carta/telemetry/viriciti-diesel")

# ---------------------------------------------------------------------------
# Write one hundred records and remember where each frame ends on disk.
broker = Broker(root / "data", {"carta": "s3cret"}, fsync_each=False)
cap = broker.authenticate("carta", "s3cret")
broker.create_topic(topic, cap)

frame_ends = []
pos = 0
for i in range(100):
    payload = f'{{"seq": {i}, "speed_kmh": {30 + i % 25}}}'.encode()
    broker.publish(topic, 1_000 * i, payload, cap)
    pos += FRAME_OVERHEAD + len(payload)
    frame_ends.append(pos)
broker.close()

seg = next((root / "data" / "carta" / "telemetry" / "viriciti-diesel").glob("*.seg"))
print(f"segment file: {seg.name}, {seg.stat().st_size} bytes, "
      f"{FRAME_OVERHEAD} bytes of framing per record")

# ---------------------------------------------------------------------------
# Simulate the crash: cut the file at three unkind positions -- inside a
# length header, inside a payload, and one byte short of a checksum.
blob = seg.read_bytes()
cuts = [frame_ends[59] + 2,          # two bytes into record 60's header
        frame_ends[74] - 10,         # mid-payload of record 74
        frame_ends[99] - 1]          # record 99 missing its final CRC byte

for cut in cuts:
    work = root / f"crash-at-{cut}"
    shutil.copytree(root / "data", work)
    (work / "carta" / "telemetry" / "viriciti-diesel" / seg.name).write_bytes(blob[:cut])

    survivor = Broker(work, {"carta": "s3cret"}, fsync_each=False)
    cap2 = survivor.authenticate("carta", "s3cret")
    cursor = survivor.open_cursor(topic, "earliest", "post-crash", cap2)
    recovered = []
    while True:
        batch, cursor = survivor.read_next(cursor, 500)
        if not batch:
            break
        recovered.extend(batch)
    survivor.close()

    complete = sum(1 for e in frame_ends if e <= cut)
    print(f"cut at byte {cut:>5}: {complete} complete frames on disk, "
          f"{len(recovered)} records recovered "
          f"({'exact prefix' if len(recovered) == complete else 'MISMATCH'})")

# ---------------------------------------------------------------------------
# The recovered broker keeps appending from where the prefix ends; offsets
# stay dense and replays stay deterministic.
survivor = Broker(root / f"crash-at-{cuts[0]}", {"carta": "s3cret"}, fsync_each=False)
cap2 = survivor.authenticate("carta", "s3cret")
offset = survivor.publish(topic, 200_000, b'{"seq": "after-recovery"}', cap2)
print(f"\nfirst append after recovery lands at offset {offset} "
      f"(60 survivors occupy offsets 0..59)")
survivor.close()
