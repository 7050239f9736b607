"""Monte Carlo critical values of the three self-normalized pivots."""
from ldpquant import PivotKind, build_pivot_table

for kind in PivotKind:
    table = build_pivot_table(kind, alphas=[0.01, 0.05, 0.1], paths=40_000, grid_steps=1000)
    row = "  ".join(f"alpha={a}: {u:6.3f} (se {s:.3f})"
                    for a, u, s in zip(table.alphas, table.U, table.std_err))
    print(f"{kind.value:17} {row}")

# build_pivot_table(...).save("pivot.json") writes the file the CLI reads.
