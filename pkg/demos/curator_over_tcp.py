"""A curator on a local socket and a crowd of users, each answering once.

Only the 11 bytes per round in the log below ever leave a user.
"""
import struct

import numpy as np

from ldpquant import EstimatorConfig, PrivacyLevel, build_pivot_table, serve, user_client
from ldpquant.protocol import fetch_status

pivot = build_pivot_table(alphas=[0.05], paths=20_000, grid_steps=1000)
config = EstimatorConfig(tau=0.8, level=PrivacyLevel(0.5))

private_values = np.random.default_rng(3).standard_cauchy(2_000)
user_rng = np.random.default_rng(4)
sent = bytearray()

with serve(("127.0.0.1", 0), config, pivot) as curator:
    print("curator at", curator.address)
    for x in private_values:
        user_client(curator.address, float(x), user_rng, wire_log=sent)
    print(fetch_status(curator.address))

print(len(sent), "bytes sent by users,", len(private_values), "rounds")
leaks = sum(struct.pack("<d", float(x)) in sent for x in private_values)
print("private values visible on the wire:", leaks)
