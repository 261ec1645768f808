"""Compare log placements on a YCSB-D replay and sweep the read fraction.

Pass --full for the 81-epoch, 140-op replay; the default is a short run.
"""

import sys

from contractchecker.harness.scenarios import crossover, placement_matrix

full = "--full" in sys.argv
workload = None if full else {"epochs": 20, "load_epochs": 4}
out = placement_matrix(workload=workload)
s = out.summary
print("total gas by client/server log placement")
for k in ("onchain/onchain", "onchain/offchain", "offchain/onchain", "offchain/offchain"):
    print(f"  {k:<20}{s[k]:>16,}")
print(f"off/off saves {s['saving_offoff_vs_onon']:.1%} over on/on; ranking holds: {s['ranking_holds']}")

print("\npersistent log: on-chain minus off-chain gas as reads take over")
for r in crossover().records:
    bar = "+" * max(0, r["diff"] // 50000) if r["diff"] > 0 else "-" * max(0, -r["diff"] // 50000)
    print(f"  read fraction {r['read_fraction']:.1f}  {r['diff']:>10,}  {bar}")
