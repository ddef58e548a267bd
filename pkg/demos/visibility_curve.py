"""Expected evidence per trial for depolarized GHZ states above threshold."""
from gtnl import load_vertices
from gtnl.pbr import default_grid, evidence_curve

grid = default_grid(12)
for variant in ("mao", "cao"):
    pts = evidence_curve(variant, load_vertices("saturating-" + variant), thetas=grid)
    print(variant)
    for p in pts:
        print(f"  theta={p.theta:.4f}  {p.objective:.6f}")
