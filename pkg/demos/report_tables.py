"""Build the two report tables from a handful of measurements.

CompressionRecord rows go in, a size-accuracy table and a quality ranking
come out; the same path the `report` CLI command uses on a sweep's CSV.
"""

from compresslab import (CompressionRecord, accuracy_delta, build_report_table,
                         quality_metric, records_to_csv)

base = CompressionRecord(sparsity=0.0, precision_bits=32, int8_mode=None,
                         size_bytes=78000, accuracy_pct=98.1)

records = [base]
for s, bits, size, acc in [(0.0, 8, 21000, 97.8), (0.9, 32, 23000, 96.0),
                           (0.9, 8, 5300, 95.7), (0.99, 8, 2300, 29.8)]:
    delta = accuracy_delta(acc, base.accuracy_pct)
    reduction = base.size_bytes / size
    records.append(CompressionRecord(
        sparsity=s, precision_bits=bits,
        int8_mode="asymmetric" if bits == 8 else None,
        size_bytes=size, accuracy_pct=acc, reduction_factor=reduction,
        delta_acc_pp=delta, quality=quality_metric(s, bits, reduction, delta)))

rows = build_report_table(records)
header = ["sparsity", "bits", "size", "reduction", "acc%", "delta", "Q", ""]
print("  ".join(f"{h:>9}" for h in header))
for row in rows:
    cells = [row["sparsity"], row["precision_bits"], row["size_bytes"],
             row["reduction_factor"], row["accuracy_pct"], row["delta_acc_pp"],
             row["quality"], row["flag"]]
    print("  ".join(f"{c:>9}" for c in cells))

print("\nAs CSV (what `sweep` writes and `report` reads):\n")
print(records_to_csv(records))
