"""Smoke test for the pyfvbem extension.

Build and install with `maturin develop -m crates/python/Cargo.toml`, or
copy `target/release/libpyfvbem.so` next to this script as `pyfvbem.so`.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import pyfvbem


def main():
    mesh = pyfvbem.Mesh.structured("lshape", 48)
    assert mesh.n_triangles == 48
    assert abs(mesh.area() - 0.1875) < 1e-14
    fine = mesh.refine(list(range(mesh.n_triangles)))
    assert fine.n_triangles == 192

    ex1 = pyfvbem.Problem.example("ex1")
    sol = pyfvbem.solve(ex1, mesh)
    assert len(sol.u) == mesh.n_vertices and len(sol.phi) == mesh.n_boundary_edges
    assert sol.residual < 1e-10
    assert 0.1 < sol.eta / sol.energy_error < 100
    print(f"ex1 on {mesh}: eta = {sol.eta:.4e}, error = {sol.energy_error:.4e}")

    history = pyfvbem.run(ex1, theta=0.5, max_steps=5)
    assert history.failure is None and len(history) == 5
    assert all(b > a for a, b in zip(history.n_elements, history.n_elements[1:]))
    print(history.to_csv(), end="")

    ex3 = pyfvbem.Problem.example("ex3")
    sol = pyfvbem.solve(ex3, ex3.initial_mesh())
    assert sol.a_inf is not None and sol.energy_error is None
    assert all(math.isfinite(p) for p in sol.phi)

    assert pyfvbem.doerfler_mark([1.0, 3.0, 2.0], 0.5) == [1]
    r = pyfvbem.reliability_constant(0.1, 1.0)
    assert f"{r['saturation_threshold']:.4f}" == "0.4198" and r["factor"] == 10.0
    assert abs(pyfvbem.fit_slope([1.0, 2.0, 4.0], [1.0, 0.5, 0.25]) + 1.0) < 1e-14
    try:
        pyfvbem.Problem.example("ex9")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown example accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
