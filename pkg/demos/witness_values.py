"""Witness values of reference behaviours."""
from gtnl import GHZ_THRESHOLD, depolarized_ghz, extremal_box, standard_witness, witness_value

for w in ("mao", "cao"):
    W = standard_witness(w)
    print(f"{w}: bound {W.bound}, GHZ {float(witness_value(W, depolarized_ghz(1.0, w))):.6f}, "
          f"threshold {float(witness_value(W, depolarized_ghz(GHZ_THRESHOLD, w))):.6f}")
print("P1 under mao:", witness_value(standard_witness("mao"), extremal_box("P1")))
print("P2 under cao:", witness_value(standard_witness("cao"), extremal_box("P2")))
