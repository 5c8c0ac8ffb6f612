"""
Tempo and pause features from a phone alignment
===============================================

Fourteen utterance-level numbers computed from phone boundaries: speech
tempo, articulation rate, and four pause statistics for silent pauses,
filled pauses, and both together.
"""

import os
import tempfile

from paralingua.temporal import FEATURE_NAMES, compute_temporal_features, parse_alignment

# uid start duration token; "sil" is a silent pause, "fp" a filled one
text = "\n".join(
    ["spk1 0.00 0.50 sil"]
    + [f"spk1 {0.5 + 0.25 * i:.2f} 0.25 p{i}" for i in range(8)]
    + ["spk1 2.50 0.50 fp", "spk1 3.00 0.50 sil"]
    + [f"spk1 {3.5 + 0.25 * i:.2f} 0.25 q{i}" for i in range(24)]
    + ["spk1 9.50 0.50 sil",
       "!length spk2 3.0",
       "spk2 0.00 0.40 h", "spk2 0.40 0.30 a", "spk2 0.70 0.60 fp", "spk2 1.30 0.40 j"]
) + "\n"

path = os.path.join(tempfile.mkdtemp(), "ali.txt")
with open(path, "w") as f:
    f.write(text)

alignments = parse_alignment(path, silent_tokens={"sil"}, filled_tokens={"fp"})
for a in alignments:
    v = compute_temporal_features(a)
    print(f"{a.utterance_id}: {a.total_length:g} s")
    for name, value in zip(FEATURE_NAMES, v.as_array()):
        print(f"  {name:<32} {value:.5g}")

# spk2 ends with 1.3 s of trailing silence declared by the !length line;
# it lowers the tempo but is not counted as a pause
