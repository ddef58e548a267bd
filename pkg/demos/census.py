"""Relabeling classes of the tripartite no-signalling vertices and their
saturation/violation counts for both witnesses."""
from gtnl import classify_census, load_vertices, standard_witness

census = classify_census(load_vertices("ns"), [standard_witness("mao"), standard_witness("cao")])
print(census.format_table())
