#!/usr/bin/env python3
"""Frame-cost report for the reference lookup exchanges.

For each reference reply pair (stock resolver output vs. the size-reduced
form) this prints the encoded sizes and how many 127-byte link frames each
needs across the whole link-overhead band, then a per-message accounting at
one chosen overhead.

    python scripts/frame_report.py [--overhead N]
"""
from __future__ import annotations

import argparse

from digstack import fixtures
from digstack.dnscodec import measure
from digstack.netsim import (
    FRAME_SIZE,
    MAX_OVERHEAD,
    MIN_OVERHEAD,
    FrameBudget,
    compare,
    render_report,
    simulate_exchange,
)
from digstack.semantics import compact_txt


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--overhead",
        type=int,
        default=MAX_OVERHEAD,
        help=f"link overhead bytes per frame for the detail table "
        f"({MIN_OVERHEAD}-{MAX_OVERHEAD}, default {MAX_OVERHEAD})",
    )
    args = parser.parse_args()

    pairs = fixtures.frame_comparison_pairs()
    print(f"frame size {FRAME_SIZE} bytes; payload per frame ranges "
          f"{FRAME_SIZE - MAX_OVERHEAD}-{FRAME_SIZE - MIN_OVERHEAD} bytes "
          f"over the {MIN_OVERHEAD}-{MAX_OVERHEAD} byte overhead band")
    print()

    header = f"{'exchange':<14} {'form':<10} {'bytes':>5}  " + "".join(
        f"oh{oh:>3} " for oh in range(MIN_OVERHEAD, MAX_OVERHEAD + 1, 5)
    )
    print(header)
    print("-" * len(header))
    for label, original, optimized in pairs:
        for form, msg in (("original", original), ("optimized", optimized)):
            cells = "".join(
                f"{compare(msg, msg, FrameBudget(overhead=oh)).frames_optimized:>5} "
                for oh in range(MIN_OVERHEAD, MAX_OVERHEAD + 1, 5)
            )
            print(f"{label:<14} {form:<10} {measure(msg):>5}  {cells}")
        saved = compare(original, optimized).bytes_saved
        print(f"{'':<14} {'(saves':<10} {saved:>5} bytes)")
    print()

    budget = FrameBudget(overhead=args.overhead)
    print(f"detail at overhead {args.overhead} "
          f"({budget.payload_per_frame} payload bytes per frame):")
    messages, labels = [], []
    for label, original, optimized in pairs:
        messages += [original, optimized]
        labels += [f"{label} original", f"{label} optimized"]
    messages.append(compact_txt(fixtures.dimmer_metadata()).data)
    labels.append("compact txt record")
    print(render_report(simulate_exchange(messages, budget, labels)))


if __name__ == "__main__":
    main()
