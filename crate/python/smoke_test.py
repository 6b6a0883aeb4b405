"""Builds the extension with cargo, imports it and checks a few closed forms.

    python3 python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "plaplab-py"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libplaplab_py.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    dest = tmp / "plaplab_py.so"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("plaplab_py", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    pl = build()
    mesh = pl.Mesh.structured(8)
    assert mesh.num_vertices == 81 and mesh.num_cells == 128

    # affine data is reproduced exactly
    sol = pl.solve(mesh, 1.0, 3.0, "x1")
    assert abs(sol["energy"] - 1.0) < 1e-10, sol["energy"]
    xs = [v[0] for v in mesh.vertices()]
    assert max(abs(u - x) for u, x in zip(sol["u"], xs)) < 1e-9

    # homogeneity of the DN pairing
    f = "x1 + 0.3*x2^2"
    base = pl.dn_pairing(mesh, "1 + x1", 3.0, f, f)
    scaled = pl.dn_pairing(mesh, "1 + x1", 3.0, "2*(x1 + 0.3*x2^2)", "2*(x1 + 0.3*x2^2)")
    assert abs(scaled - 8.0 * base) < 1e-6 * scaled

    lower, middle, upper = pl.monotonicity(mesh, 2.0, 1.0, 2.0, "x1")
    assert abs(lower - 0.5) < 1e-9 and abs(middle - 1.0) < 1e-9 and abs(upper - 1.0) < 1e-9

    q1, q2 = pl.beltrami_coefficients(4.0)
    assert abs(q1 - 4 / 15) < 1e-12 and abs(q2 - 1 / 15) < 1e-12

    b = pl.gram_schmidt(2.0, 1.0, 2.0)
    assert abs(b[0][0] - math.sqrt(2)) < 1e-14 and b[1][0] == 0.0

    assert abs(pl.beta_argmin(3.0, [1.0 + 0.01 * k for k in range(200)]) - 2.0) < 1e-9

    v, res, rt = pl.stream_function(mesh, sol["u"], 1.0, 3.0)
    assert res < 1e-8 and rt < 1e-8

    try:
        pl.solve(mesh, -1.0, 2.0, "x1")
    except ValueError:
        pass
    else:
        raise AssertionError("negative conductivity accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
