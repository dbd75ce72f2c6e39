"""Write the binary interchange fixtures from their documented layouts.

Run from this directory: python3 make_fixtures.py
"""

import struct


def s(text):
    b = text.encode("utf-8")
    return struct.pack("<I", len(b)) + b


EMBEDDINGS = [
    ("synth:conv000:0", [0.5, -1.25, 3.0]),
    ("synth:conv001:0", [0.0, 0.001, -2.5]),
    ("café:c:0", [1.0, 2.0, 4.0]),
]

emb = b"RPEMB1" + bytes([1]) + struct.pack("<IQ", 3, len(EMBEDDINGS))
for ident, vec in EMBEDDINGS:
    emb += s(ident) + struct.pack("<3f", *vec)
with open("tiny.rpemb", "wb") as f:
    f.write(emb)

WEIGHTS = [0.5, -0.25, 0.0, 1.5, -2.0, 0.125, 0.0, 3.0]

mod = b"RPMOD1" + bytes([1])
mod += struct.pack("<I", 2) + s("F") + s("M")
mod += bytes([0]) + struct.pack("<Q", 8) + s("cfg-digest")
mod += struct.pack("<Q", len(WEIGHTS)) + struct.pack("<8d", *WEIGHTS)
mod += struct.pack("<d", -0.75)
mod += struct.pack("<QIddIB", 3, 2, 0.1, 1e-4, 32, 0)
mod += s("dataset-digest")
with open("tiny.rpmod", "wb") as f:
    f.write(mod)
