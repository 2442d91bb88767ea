"""
Reading and writing SWF traces
==============================

Traces use the 18-field Standard Workload Format. Write a synthetic trace,
read it back, and see how malformed or cancelled records are handled.
"""

import io

from splitsched.workload import DESK_PARAMS, generate_synthetic, parse_swf, write_swf

trace = generate_synthetic(DESK_PARAMS, 5)
buf = io.StringIO()
write_swf(trace, buf, ["five synthetic jobs"])
print(buf.getvalue())

again = parse_swf(buf.getvalue())
print("round trip identical:", [(j.submit_time, j.cores, j.runtime) for j in again.jobs]
      == [(j.submit_time, j.cores, j.runtime) for j in trace.jobs])

# status 5 marks a cancelled job, and zero cores cannot be scheduled: both are skipped
text = "\n".join([
    "; MaxProcs: 8",
    "1 0 0 100 4 -1 -1 4 100 -1 1 -1 -1 -1 -1 -1 -1 -1",
    "2 5 0 100 4 -1 -1 4 100 -1 5 -1 -1 -1 -1 -1 -1 -1",
    "3 9 0 100 0 -1 -1 0 100 -1 1 -1 -1 -1 -1 -1 -1 -1",
])
parsed = parse_swf(text)
print(len(parsed), "job kept,", parsed.skipped, "skipped")
