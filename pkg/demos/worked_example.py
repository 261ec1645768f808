"""Walk through the two-client example step by step.

C1 writes v1 to K, C2 writes v2 to K, then C1 reads K and gets v1 back.
Run once with serial intervals (the read is stale) and once with w1
overlapping w2 (the server can justify the read with the order w2, w1, r3).
"""

from contractchecker.harness.scenarios import worked_example


def show(concurrent: bool) -> None:
    out = worked_example(concurrent)
    s = out.summary
    title = "w1 overlaps w2" if concurrent else "serial intervals"
    print(f"-- {title}")
    print(f"   server declared order : {' '.join(s['declared'])}")
    print(f"   contract verdict      : {s['status']}")
    print(f"   stale reads           : {s['stale_reads'] or 'none'}")
    gas = sum(e["gas"] for e in out.events if e["event"] == "exec")
    txs = sum(1 for e in out.events if e["event"] == "exec")
    print(f"   {txs} transactions, {gas:,} gas\n")


if __name__ == "__main__":
    show(False)
    show(True)
