"""Opt-in long runs at full experiment scale.

These reproduce the heavyweight configurations (level-4 meshes, 500-1000
round trips, sextic fits) that the default test suite scales down. Expect
tens of minutes to hours per block; pass block names as arguments:

    python demos/06_paper_scale_runs.py detect-l4 repeat-1000 sextic
"""

import sys

import numpy as np

from surfremap import (
    F2,
    F3,
    F4,
    RemapConfig,
    build_plan,
    compute_indicators,
    conservation_error,
    cubed_sphere_for_level,
    dual_threshold,
    error_norms,
    icosphere_for_level,
    repeated_transfer,
)

blocks = set(sys.argv[1:]) or {"detect-l4"}

if "detect-l4" in blocks:
    # markers for the crossing-wave field on the level-4 source mesh
    mesh = icosphere_for_level(4)
    print(f"level-4 icosphere: {mesh.n_nodes} nodes")
    f = F4(mesh.nodes)
    ind = compute_indicators(mesh, f)
    markers, _ = dual_threshold(mesh, ind.alpha, ind.beta, f)
    theta = np.arccos(np.clip(mesh.nodes[:, 2], -1, 1))
    print(f"f4 markers: {int(markers.sum())}")
    for bp in (np.pi / 4, np.pi / 2, 3 * np.pi / 4, 7 * np.pi / 8):
        near = np.abs(theta - bp) <= 0.01
        print(f"  band theta={bp:.3f}: {int((markers & near).sum())} marked")

if "repeat-1000" in blocks:
    # 1000 round trips of the step field on level-3 meshes
    src = icosphere_for_level(3)
    tgt = cubed_sphere_for_level(3)
    cfg = RemapConfig(degree=4, eno_degree=2)
    ab = build_plan(src, tgt, cfg)
    ba = build_plan(tgt, src, cfg)
    res = repeated_transfer(ab, ba, F3(src.nodes), 1000, exact_field=F3)
    last = res.records[-1]
    print(f"after 1000 round trips: l2={last.l2:.3e} range=[{last.vmin:.6f}, {last.vmax:.6f}]")
    ce = conservation_error(src, res.final, F3, degree=4)
    print(f"conservation error: {ce:.3e}")

if "sextic" in blocks:
    # sextic transfer accuracy on the finest ladder level
    for level in (3, 4):
        src = icosphere_for_level(level)
        tgt = cubed_sphere_for_level(level)
        plan = build_plan(src, tgt, RemapConfig(degree=6, sigma=1.4, eno=False))
        l2, linf = error_norms(plan.apply(F2(src.nodes)).values, F2(tgt.nodes))
        print(f"sextic f2 level {level}: l2={l2:.3e} linf={linf:.3e}")
