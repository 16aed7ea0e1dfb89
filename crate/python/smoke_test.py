"""Smoke test for the hermiton Python extension.

Uses an installed `hermiton` module if there is one (e.g. after
`maturin develop -m crates/python/Cargo.toml`); otherwise builds the
extension with cargo and loads it from a temporary directory.
"""

import cmath
import importlib
import json
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        return importlib.import_module("hermiton")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "hermiton-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    names = {"linux": "libhermiton_py.so", "darwin": "libhermiton_py.dylib", "win32": "hermiton_py.dll"}
    built = ROOT / "target" / "release" / names.get(sys.platform, "libhermiton_py.so")
    target = Path(tempfile.mkdtemp()) / ("hermiton" + sysconfig.get_config_var("EXT_SUFFIX"))
    shutil.copy(built, target)
    sys.path.insert(0, str(target.parent))
    return importlib.import_module("hermiton")


def main():
    h = load()

    p = h.ModelParams.schrodinger(1.0)
    chi = [[1, 0], [0, 2]]
    traj = h.integrate("schrodinger", p, chi, [1, 1j], [[1, 0], [0, 1]], dt=1e-3, t_end=1.0, sample_stride=100)
    assert abs(traj.psi[-1][0] - cmath.exp(-1j)) < 1e-9, traj.psi[-1]
    assert max(traj.herm_drift) == 0.0

    g = [[2, 0.3 + 0.2j], [0.3 - 0.2j, 1]]
    d = [[0.4, 0.1 - 0.3j], [0.1 + 0.3j, -0.2]]
    geo = h.integrate("gamma_geodesic", h.ModelParams(alpha6=1.0, alpha7=0.2), [[0, 0], [0, 0]], [0, 0], g,
                      gamma_dot=d, t_end=1.0, sample_stride=500)
    exact = h.exact_gamma(g, d, 1.0)
    err = max(abs(geo.gamma[-1][i][j] - exact[i][j]) for i in range(2) for j in range(2))
    assert err < 1e-9, err

    try:
        h.theta1([1, 0], [[1, 0.5], [0, 1]])
    except h.HermitonError as e:
        assert "NotHermitian" in str(e)
    else:
        raise AssertionError("non-Hermitian form accepted")

    with tempfile.TemporaryDirectory() as out:
        report = json.loads(h.run_scenario("oracle", str(ROOT / "scenarios" / "geodesic.json"), out))
        assert report["max_deviation"] < 1e-7, report

    print("hermiton smoke test passed")


if __name__ == "__main__":
    main()
