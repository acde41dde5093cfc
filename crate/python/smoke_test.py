"""Smoke test for the regseiqr_py extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import math
import tempfile
from pathlib import Path

import regseiqr_py as rs


def main() -> None:
    # reproduction numbers
    assert abs(rs.r0_basic(0.5) - 3.0) < 1e-12
    assert abs(rs.r0_regional(0.5, 1.0) - 2.5) < 1e-12
    a, b, c = rs.quadratic_coefficients()
    assert abs((a + b + c) - 5.0) < 1e-9

    # observation model
    assert math.isclose(rs.nb2_logpmf(0, 2.0, 1e12), -2.0, rel_tol=1e-6)

    cfg = rs.Config()
    assert cfg.mode == "hierarchical"
    assert len(cfg.regions) == 5
    text = cfg.to_toml()
    assert rs.Config(text).to_toml() == text

    with tempfile.TemporaryDirectory() as tmp:
        cfg = rs.Config(
            '[[regions]]\nname = "coastal"\npopulation = 1225195.0\n'
            '[[regions]]\nname = "interior"\npopulation = 795116.0\n'
        )
        counts = rs.simulate(cfg, tmp, seed=3, end="2020-06-30")
        assert sorted(counts) == ["coastal", "interior"]
        assert len(counts["coastal"]) == 122

        post = rs.Posterior(cfg, str(Path(tmp) / "cases.csv"))
        truth = [float(line.split(",")[1])
                 for line in (Path(tmp) / "truth.csv").read_text().splitlines()[1:]]
        x = post.unconstrain(truth)
        assert max(abs(u - v) for u, v in zip(post.constrain(x), truth)) < 1e-10
        lp, grad = post.log_density_and_gradient(x)
        assert math.isfinite(lp) and len(grad) == post.dim
        assert abs(post.log_density(x) - lp) < 1e-9 * abs(lp)
        mu = post.expected_counts(truth, 0)
        assert len(mu) == 122 and all(m >= 0 for m in mu)

        fit_cfg = rs.Config('fit_end = "2020-04-30"\n' + cfg.to_toml())
        fit_cfg.set_sampler(2, 40, 20)
        fit_cfg.seed = 11
        out = Path(tmp) / "fit"
        summary = rs.fit(fit_cfg, str(Path(tmp) / "cases.csv"), str(out))
        assert '"mode":"hierarchical"' in summary
        for name in ["draws.csv", "diagnostics.csv", "summary.json", "resolved_config.toml"]:
            assert (out / name).exists(), name

    print("smoke test passed")


if __name__ == "__main__":
    main()
