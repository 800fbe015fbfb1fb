"""Proximity co-occurrence and entity expansion.

Entities that keep appearing near each other inside item descriptions of
the same category become expansion partners; an item's entity multiset then
grows by each occurrence's strongest partners, weighted below 1 so an exact
occurrence always outranks an expansion.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from streamrec.data import SocialItem
from streamrec.expansion import build_cooccurrence, expand_entities

NAMES = ["Beckham", "football", "worldcup", "FIFA", "Brazil", "Messi"]
B, F, W, FI, BR, M = range(6)
SPORTS = 0

corpus = [
    SocialItem("v1", SPORTS, 1, (W, FI), 0),          # worldcup next to FIFA
    SocialItem("v2", SPORTS, 1, (W, FI, BR), 1),
    SocialItem("v3", SPORTS, 2, (B, M), 2),           # Beckham next to Messi
    SocialItem("v4", SPORTS, 2, (B, F, M), 3),        # ... and at distance 2
    SocialItem("v5", SPORTS, 1, (W, BR), 4),
]

stats = build_cooccurrence(corpus, window=5)
print("pair scores under category 'sports' (1/distance per co-occurrence):")
for a, b in [(W, FI), (B, M), (W, BR), (B, F)]:
    print(f"  {NAMES[a]:9s} ~ {NAMES[b]:9s}: {stats.score(SPORTS, a, b):.2f}")

print("\nexpansion partners (max-normalized per source, capped at 0.95):")
for e in (W, B):
    partners = ", ".join(f"{NAMES[p]}={w:.2f}" for p, w in stats.partners(SPORTS, e))
    print(f"  {NAMES[e]:9s} -> {partners}")

incoming = (B, W, W)
expanded = expand_entities(incoming, SPORTS, stats, m=1)
print("\nincoming item entities :", [NAMES[e] for e in incoming])
print("after expansion (m=1)  :")
for e, w in expanded:
    tag = "original " if w == 1.0 else "expansion"
    print(f"  {tag} {NAMES[e]:9s} weight {w:.2f}")
