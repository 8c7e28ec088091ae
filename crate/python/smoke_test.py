"""Smoke test for the scgan_py extension.

Build and install first:  pip install maturin && maturin develop -m crates/py/Cargo.toml --release
"""

import tempfile
from pathlib import Path

import scgan_py


def main():
    digits = scgan_py.Config("digits")
    assert (digits.alpha, digits.beta, digits.gamma) == (10.0, 1.0, 0.2)

    assert scgan_py.pseudo_label([0.97, 0.02, 0.01], 0.95) == (0, 0.97, True)
    assert scgan_py.pseudo_label([0.9, 0.1], 0.9)[2] is False

    rows = scgan_py.gradcheck("TINY")
    assert len(rows) == 15 and all(r[3] for r in rows), rows

    cfg = scgan_py.Config("two_moons", {"n_per_domain": "100", "pretrain_steps": "200", "train_steps": "20", "batch_size": "32"})
    data = cfg.make_data()
    assert len(data) == 200
    model = scgan_py.Model.fit(cfg, data)
    assert model.step == 20
    hist = model.history()
    assert len(hist) == 20
    for r in hist:
        assert abs(r["total"] - (r["total_g"] + r["total_d"] + cfg.gamma * r["total_c"])) < 1e-6

    codes = model.encode(data.target_pixels()[:5])
    assert len(codes) == 5 and len(codes[0]) == 8
    acc = model.target_accuracy(data)
    assert 0.0 <= acc <= 1.0 and acc == model.final_accuracy

    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "m.ckpt"
        model.save(str(path))
        back = scgan_py.Model.load(str(path), cfg)
        assert back.step == model.step
        assert back.predict(data.target_pixels()) == model.predict(data.target_pixels())

    try:
        scgan_py.Config("two_moons", {"momentum": "1.5"})
    except ValueError as e:
        assert "momentum" in str(e)
    else:
        raise AssertionError("invalid momentum accepted")

    print(f"ok: source-only {model.source_only_accuracy:.3f}, adapted {acc:.3f}")


if __name__ == "__main__":
    main()
