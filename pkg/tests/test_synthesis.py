import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jwdm.model import build_bundle
from jwdm.synthesis import export_trajectory, interpolate, load_trajectory, plot_trajectory

BUNDLE = build_bundle(seed=21, hidden=(16,))


def segment_residual(latents, z_begin, z_end) -> float:
    """Distance of each latent from the line through z_begin and z_end (projection form)."""
    d = z_begin - z_end
    t = (latents - z_end) @ d / (d @ d)
    return float(np.abs(latents - z_end - t[:, None] * d).max())


def test_frame_counts_and_rho():
    traj = interpolate(BUNDLE, [1.0, 0.0], [0.0, 1.0], 8)
    assert traj.n_frames == 9
    assert traj.source.shape == (9, 2) and traj.target.shape == (9, 2)
    np.testing.assert_array_equal(traj.rho, [(8 - k) / 8 for k in range(9)])


def test_n_two_has_one_midpoint():
    traj = interpolate(BUNDLE, [1.0, 0.5], [-0.3, 0.2], 2)
    assert traj.rho[1] == 0.5
    z0, z2 = traj.latents[0], traj.latents[2]
    np.testing.assert_allclose(traj.latents[1], (z0 + z2) / 2, rtol=0, atol=1e-15)


def test_endpoints_follow_output_sets():
    xb, xe = np.array([0.7, -0.2]), np.array([-0.1, 0.9])
    traj = interpolate(BUNDLE, xb, xe, 5)
    zb, ze = BUNDLE.E1.predict(xb[None])[0], BUNDLE.E1.predict(xe[None])[0]
    np.testing.assert_array_equal(traj.latents[0], zb)
    np.testing.assert_array_equal(traj.latents[-1], ze)
    np.testing.assert_array_equal(traj.source[0], xb)
    np.testing.assert_array_equal(traj.source[-1], xe)
    np.testing.assert_array_equal(traj.target[0], BUNDLE.G2.predict(zb[None])[0])
    np.testing.assert_array_equal(traj.target[-1], BUNDLE.G2.predict(ze[None])[0])
    for k in range(1, traj.n_frames - 1):
        np.testing.assert_array_equal(traj.source[k], BUNDLE.G1.predict(traj.latents[k:k + 1])[0])
        np.testing.assert_array_equal(traj.target[k], BUNDLE.G2.predict(traj.latents[k:k + 1])[0])
    np.testing.assert_array_equal(traj.source_recon[0], BUNDLE.G1.predict(zb[None])[0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.integers(2, 30))
def test_latents_lie_on_segment(coords, n):
    xb, xe = np.array(coords[:2]), np.array(coords[2:])
    traj = interpolate(BUNDLE, xb, xe, n)
    zb, ze = traj.latents[0], traj.latents[-1]
    if np.array_equal(zb, ze):
        assert (traj.latents == zb).all()
        return
    assert segment_residual(traj.latents, zb, ze) < 1e-12
    expected = ze + traj.rho[:, None] * (zb - ze)
    assert np.abs(traj.latents - expected).max() < 1e-12


def test_identical_endpoints_give_constant_trajectory():
    traj = interpolate(BUNDLE, [0.3, 0.3], [0.3, 0.3], 6)
    assert (traj.latents == traj.latents[0]).all()
    assert (traj.target == traj.target[0]).all()
    assert (traj.source[1:-1] == traj.source[1]).all()
    assert (traj.source_recon == traj.source_recon[0]).all()
    assert traj.max_step()["y"] == 0.0


def test_n_below_two_rejected():
    for n in (0, 1):
        with pytest.raises(ValueError):
            interpolate(BUNDLE, [0, 0], [1, 1], n)


def test_export_and_reload(tmp_path):
    traj = interpolate(BUNDLE, [1.0, 0.0], [0.0, 1.0], 2)
    path = tmp_path / "t.csv"
    export_trajectory(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "frame,rho,domain,dim0,dim1"
    assert len(lines) == 1 + 6
    back = load_trajectory(path)
    np.testing.assert_allclose(back["x"], traj.source, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back["y"], traj.target, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(back["rho"], traj.rho)


def test_export_errors(tmp_path):
    traj = interpolate(BUNDLE, [1.0, 0.0], [0.0, 1.0], 2)
    with pytest.raises(ValueError):
        export_trajectory(traj, "")
    with pytest.raises(OSError):
        export_trajectory(traj, tmp_path / "missing" / "t.csv")


def test_plot_writes_png(tmp_path):
    traj = interpolate(BUNDLE, [1.0, 0.0], [0.0, 1.0], 4)
    plot_trajectory(traj, tmp_path / "t.png")
    assert (tmp_path / "t.png").read_bytes()[:4] == b"\x89PNG"
