"""Generate the experiment meshes and inspect their structure.

The transfer experiments run between two quasi-uniform families on the unit
sphere: subdivided icosahedra (triangles) and gnomonic cubed spheres
(quadrilaterals). Element counts quadruple per refinement level.
"""

import numpy as np

from surfremap import (
    gen_cubed_sphere,
    gen_icosphere,
    gen_planar_grid,
    k_ring,
    load_mesh,
    locate_element,
    mesh_metrics,
    save_mesh,
)

print("icosphere family (10*4^d + 2 nodes):")
for depth in range(4):
    m = gen_icosphere(depth)
    met = mesh_metrics(m)
    print(
        f"  depth {depth}: {met.n_nodes:6d} nodes, {met.n_elements:6d} triangles, "
        f"mean edge {met.h_g:.4f}, V-E+F = {met.euler_characteristic}"
    )

print("\ncubed-sphere family (6n^2 + 2 nodes):")
for n in (1, 6, 13):
    m = gen_cubed_sphere(n)
    met = mesh_metrics(m)
    print(
        f"  n = {n:2d}: {met.n_nodes:5d} nodes, {met.n_elements:5d} quads, "
        f"mean edge {met.h_g:.4f}"
    )

# connectivity queries: k-ring neighborhoods grow in half-ring steps
m = gen_icosphere(2)
v = 100
for k in (1, 1.5, 2, 2.5, 3):
    print(f"  {k}-ring of node {v}: {k_ring(m, v, k).size} nodes")

# point location: radial projection onto the containing element
p = np.array([0.3, -0.5, 0.81])
p /= np.linalg.norm(p)
loc = locate_element(m, p)
print(f"\npoint {np.round(p, 3)} lies in element {loc.element_id}, "
      f"barycentric {np.round(loc.natural, 4)}")

# meshes round-trip exactly through the text format
save_mesh(m, "/tmp/demo_mesh.txt")
back = load_mesh("/tmp/demo_mesh.txt")
print("save/load round trip exact:", np.array_equal(back.nodes, m.nodes))

# planar grids serve the exactness tests
g = gen_planar_grid(4, 3, "tri")
print(f"planar 4x3 grid: {g.n_nodes} nodes, {g.n_elements} triangles")
