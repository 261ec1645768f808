"""Tour the attack catalogue.

Each server edit (AS1-AS4) and client edit (AC1-AC4) is injected into a
fresh truthful epoch. The contract cross-checks the two logs, names the
culprit and audits the repaired log. Then the three scripted protocol
attacks run: a dropped client attestation, a race between two server
attestations, and a chain partition.
"""

import sys

from contractchecker.harness.scenarios import ATTACK_CODES, attack_case, chain_fork, fork_race, selective_omission

seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 5

print(f"{'code':<6}{'detected':>10}{'repaired = truthful':>22}")
for code in ATTACK_CODES:
    rows = [attack_case(code, s) for s in range(seeds)]
    hit = sum(r["status"] == "AttackDetected" and r["codes"] == [code] for r in rows)
    same = sum(r["repaired"] == r["truthful"] for r in rows)
    print(f"{code:<6}{hit:>7}/{seeds}{same:>19}/{seeds}")

print("\nselective omission")
for resubmit in (False, True):
    s = selective_omission(0, resubmit).summary
    print(f"  resubmission {'on ' if resubmit else 'off'}: verdict {s['status']} {s['codes']}, "
          f"ground truth {s['truth']}, victim fees {s['victim_fees']}")

print("\nrace between two server attestations")
for lock in (False, True):
    s = fork_race(lock=lock).summary
    print(f"  lock {'on ' if lock else 'off'}: verdict {s['status']}, second server call -> "
          f"{s['second_server_call'] or 'accepted'}")

print("\nchain partition healed")
s = chain_fork(0).summary
print(f"  verdict {s['status']} {s['codes']}, server receipts {s['server_receipts']}")
