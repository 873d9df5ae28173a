"""Smoke test for the bloch_fem extension.

Build and install first, e.g.
    pip install maturin && maturin develop -m crates/bloch-fem-py/Cargo.toml --release
"""

import math

import numpy as np

import bloch_fem


def main():
    h = bloch_fem.hankel_h0_1(1.0)
    assert abs(h - complex(0.7651976865579666, 0.08825696421567696)) < 1e-12, h

    nodes, tris = bloch_fem.build_mesh(0.8)
    assert nodes.shape[1] == 2 and tris.shape[1] == 3
    assert np.all(nodes[:, 1] >= 1.0 - 1e-12) and np.all(nodes[:, 1] <= 3.0 + 1e-12)

    cfg = bloch_fem.RunConfig()
    assert cfg.k == 1.0 and cfg.N == 10
    back = bloch_fem.RunConfig(cfg.to_toml())
    assert back.to_toml() == cfg.to_toml()
    try:
        bloch_fem.RunConfig("k = -1.0")
    except bloch_fem.ConfigError:
        pass
    else:
        raise AssertionError("negative k accepted")

    row = bloch_fem.run_example(1, 4, 0.64)
    assert row["example"] == 1 and row["N"] == 4
    assert 0.0 < row["relative_error"] < 1.0, row

    ex = cfg.for_example(3, 2, 0.8)
    x1, u, err = bloch_fem.solve(ex)
    assert x1.shape == u.shape and u.dtype == np.complex128
    assert err is not None and math.isfinite(err)

    cmp = bloch_fem.oracle_check(1, 2, 0.8)
    assert cmp["difference"] < 1e-8 and cmp["counts_match"], cmp

    print("bloch_fem smoke test passed")


if __name__ == "__main__":
    main()
