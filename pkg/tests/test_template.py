import numpy as np
import pytest

from intrinsics4d.render.camera import look_at, orbit_pose
from intrinsics4d.template import (
    DeformableMeshSequence,
    FitConfig,
    FlowTargets,
    NsmConfig,
    ToyEncoder,
    arap_energy,
    boundary_coeffs,
    consistency_denoise,
    encode_features,
    fit_basis_on_grid,
    fit_deformation,
    fit_pca,
    neural_state_map,
    one_ring_edges,
    pca_project,
    rasterize_flow,
    read_flow,
    render_template,
    textured_sphere_sequence,
    write_flow,
    zero_denoiser,
)
from intrinsics4d.template.raster import project
from intrinsics4d.distill import make_schedule


def _tet():
    v = np.array(
        [[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0], [0.5, np.sqrt(3) / 6, np.sqrt(2 / 3)]],
        dtype=float,
    )
    f = np.array([[0, 1, 2], [0, 1, 3], [1, 2, 3], [0, 2, 3]])
    return v, f


def _random_rigid(rng):
    a = rng.normal(size=3)
    a /= np.linalg.norm(a)
    th = rng.uniform(0, 2 * np.pi)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    r = np.eye(3) + np.sin(th) * k + (1 - np.cos(th)) * (k @ k)
    return r, rng.normal(size=3)


# --- ARAP -------------------------------------------------------------------


def test_arap_zero_at_identity():
    v, f = _tet()
    e, g = arap_energy(v, f, v)
    assert e < 1e-18
    assert np.allclose(g, 0.0, atol=1e-12)


def test_arap_rigid_invariance_random_transforms():
    v, f = _tet()
    rng = np.random.default_rng(2)
    for _ in range(10):
        r, t = _random_rigid(rng)
        e, _ = arap_energy(v, f, v @ r.T + t)
        assert e < 1e-9
        # moving both canonical and deformed rigidly also stays invariant
        e2, _ = arap_energy(v @ r.T + t, f, (v @ r.T + t) @ r.T + t)
        assert e2 < 1e-9


def test_arap_uniform_scale_brute_force():
    # scale 2: best rotations stay identity, energy = sum over directed
    # edges of the canonical edge lengths squared
    v, f = _tet()
    e, _ = arap_energy(v, f, 2.0 * v)
    edges = one_ring_edges(f, len(v))
    brute = sum(float(np.sum((v[i] - v[j]) ** 2)) for i, j in edges)
    assert abs(e - brute) < 1e-9


def test_arap_isolated_vertex_contributes_zero():
    v, f = _tet()
    v5 = np.vstack([v, [9.0, 9.0, 9.0]])  # vertex 4 unreferenced
    d5 = v5.copy()
    d5[4] += 3.0
    e, g = arap_energy(v5, f, d5)
    assert e < 1e-18
    assert np.all(g[4] == 0.0)


def test_arap_gradient_descends():
    v, f = _tet()
    rng = np.random.default_rng(3)
    d = v + 0.2 * rng.normal(size=v.shape)
    e0, g = arap_energy(v, f, d)
    e1, _ = arap_energy(v, f, d - 1e-3 * g)
    assert e1 < e0


# --- rasterization / flow ----------------------------------------------------


def _quad_seq(shift=np.array([0.3, 0.16, 0.0])):
    verts = np.array([[-0.4, -0.4, 0], [0.4, -0.4, 0], [0.4, 0.4, 0], [-0.4, 0.4, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    colors = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0]], dtype=float)
    offsets = np.zeros((3, 4, 3))
    offsets[1] = shift / 2
    offsets[2] = shift
    return DeformableMeshSequence(verts, faces, colors, offsets, 0)


def test_flow_zero_when_frames_equal():
    seq = textured_sphere_sequence(frames=4)
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=48, height=48)
    flow, mask = rasterize_flow(seq, 2, 2, cam)
    assert mask.sum() > 100
    assert np.all(flow[mask] == 0.0)


def test_flow_matches_pinhole_translation():
    # world translation delta at depth z projects to f * delta / z pixels
    shift = np.array([0.3, 0.16, 0.0])
    seq = _quad_seq(shift)
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=64, height=64)
    flow, mask = rasterize_flow(seq, 0, 2, cam)
    f_pix = (64 / 2) / np.tan(cam.fov_y / 2)
    expected = np.array([shift[0], -shift[1]]) * f_pix / 1.8  # pixel y points down
    got = flow[mask]
    assert np.all(np.abs(got - expected) < 0.01 * np.abs(expected).max())


def test_flow_background_masked():
    seq = _quad_seq()
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=32, height=32)
    flow, mask = rasterize_flow(seq, 0, 1, cam)
    assert np.all(flow[~mask] == 0.0)
    assert 0 < mask.sum() < mask.size


def test_flow_antisymmetry_on_depth_preserving_motion():
    seq = _quad_seq()
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=64, height=64)
    fab, mab = rasterize_flow(seq, 0, 2, cam)
    fba, mba = rasterize_flow(seq, 2, 0, cam)
    both = mab & mba
    assert both.sum() > 200
    assert np.max(np.abs(fab[both] + fba[both])) < 1e-4


def test_render_template_away_camera_is_background():
    seq = textured_sphere_sequence(frames=3)
    cam = look_at((0, 0, 2.5), (0, 0, 5), width=16, height=16)
    img = render_template(seq, cam, 1)
    assert np.allclose(img, img[0, 0])


def test_render_template_deterministic():
    seq = textured_sphere_sequence(frames=3)
    cam = orbit_pose(0.7, 0.3, 1.7, width=48, height=48)
    a = render_template(seq, cam, 2)
    b = render_template(seq, cam, 2)
    assert a.tobytes() == b.tobytes()


def test_render_template_against_pixel_oracle():
    # fronto-parallel quad: per-pixel coverage and barycentric colors are
    # computable directly from the projected vertices
    seq = _quad_seq(np.zeros(3))
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=32, height=32)
    img = render_template(seq, cam, 0)
    xy, depth = project(cam, seq.vertices)
    from intrinsics4d.template.mesh import face_normals

    n = face_normals(seq.vertices, seq.faces)
    centroids = seq.vertices[seq.faces].mean(axis=1)
    view = cam.translation - centroids
    view /= np.linalg.norm(view, axis=1, keepdims=True)
    head = 0.25 + 0.75 * np.abs(np.sum(n * view, axis=1))

    bg = img[0, 0]
    for py in range(32):
        for px in range(32):
            expected = bg
            for fi, face in enumerate(seq.faces):
                p0, p1, p2 = xy[face]
                area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
                w0 = ((p1[0] - px) * (p2[1] - py) - (p2[0] - px) * (p1[1] - py)) / area
                w1 = ((p2[0] - px) * (p0[1] - py) - (p0[0] - px) * (p2[1] - py)) / area
                w2 = 1 - w0 - w1
                if w0 >= 0 and w1 >= 0 and w2 >= 0:
                    cols = seq.colors[face]
                    expected = (w0 * cols[0] + w1 * cols[1] + w2 * cols[2]) * head[fi]
                    break
            assert np.allclose(img[py, px], expected, atol=1e-9), (py, px)


# --- deformation fitting ------------------------------------------------------


def test_fit_zero_flow_is_fixed_point():
    seq = textured_sphere_sequence(frames=3, wobble=0.0)
    seq.offsets[:] = 0.0
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=48, height=48)
    flows = np.zeros((3, 48, 48, 2))
    masks = np.ones((3, 48, 48), dtype=bool)
    fit, _ = fit_deformation(seq, FlowTargets(flows, masks), cam, FitConfig(iterations=40, step_size=0.005))
    assert np.max(np.abs(fit.offsets)) < 1e-3


def test_fit_recovers_translation():
    gt = textured_sphere_sequence(frames=4, wobble=0.0)
    shift = np.array([0.25, 0.0, 0.0])
    for f in range(1, 4):
        gt.offsets[f] = shift * f / 3
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=64, height=64)
    flows, masks = [], []
    for f in range(4):
        fl, mk = rasterize_flow(gt, 0, f, cam)
        flows.append(fl)
        masks.append(mk)
    init = textured_sphere_sequence(frames=4, wobble=0.0)
    init.offsets[:] = 0.0
    # back-hemisphere vertices receive no flow gradient, so a strong ARAP
    # weight is what carries the (rigid) translation to them
    fit, metrics = fit_deformation(
        init, FlowTargets(np.stack(flows), np.stack(masks)), cam, FitConfig(iterations=300, step_size=0.01, lambda_arap=5.0)
    )
    assert metrics["loss"][-1] < metrics["loss"][0]
    for f in range(1, 4):
        rec = fit.offsets[f].mean(axis=0)
        true = shift * f / 3
        assert np.linalg.norm(rec - true) < 0.1 * np.linalg.norm(true)


def test_fit_canonical_frame_pinned():
    gt = textured_sphere_sequence(frames=3)
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=32, height=32)
    flows, masks = [], []
    for f in range(3):
        fl, mk = rasterize_flow(gt, 0, f, cam)
        flows.append(fl)
        masks.append(mk)
    init = textured_sphere_sequence(frames=3)
    init.offsets[:] = 0.0
    fit, _ = fit_deformation(init, FlowTargets(np.stack(flows), np.stack(masks)), cam, FitConfig(iterations=10))
    assert np.all(fit.offsets[fit.canonical_frame] == 0.0)


def test_fit_strong_arap_keeps_motion_near_rigid():
    # conflicting flow: stretch the target along x; with a huge ARAP weight
    # the recovered motion stays near-rigid
    gt = textured_sphere_sequence(frames=2, wobble=0.0)
    gt.offsets[1] = gt.vertices * np.array([0.5, 0.0, 0.0])
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=48, height=48)
    fl, mk = rasterize_flow(gt, 0, 1, cam)
    init = textured_sphere_sequence(frames=2, wobble=0.0)
    init.offsets[:] = 0.0
    fit, _ = fit_deformation(
        init,
        FlowTargets(np.stack([np.zeros_like(fl), fl]), np.stack([mk, mk])),
        cam,
        FitConfig(iterations=80, step_size=0.01, lambda_arap=1e6),
    )
    e, _ = arap_energy(fit.vertices, fit.faces, fit.vertices + fit.offsets[1])
    edges = one_ring_edges(fit.faces, len(fit.vertices))
    scale = sum(float(np.sum((fit.vertices[i] - fit.vertices[j]) ** 2)) for i, j in edges)
    assert e < 1e-4 * scale


def test_fit_skips_empty_frames():
    seq = textured_sphere_sequence(frames=3)
    seq.offsets[:] = 0.0
    cam = look_at((0, 0, 1.8), (0, 0, 0), width=16, height=16)
    flows = np.zeros((3, 16, 16, 2))
    masks = np.zeros((3, 16, 16), dtype=bool)
    with pytest.warns(UserWarning):
        fit_deformation(seq, FlowTargets(flows, masks), cam, FitConfig(iterations=2))


def test_flow_file_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    flows = rng.normal(size=(3, 8, 9, 2)).astype(np.float32).astype(float)
    masks = rng.random((3, 8, 9)) > 0.5
    p = tmp_path / "t.flw"
    write_flow(p, flows, masks)
    fl, mk = read_flow(p)
    assert np.allclose(fl, flows, atol=1e-7)
    assert np.array_equal(mk, masks)


# --- consistency denoising ----------------------------------------------------


def test_consistency_identity_at_tau_min():
    sched = make_schedule(steps=200)
    z = np.random.default_rng(5).random((6, 6, 3))
    out = consistency_denoise(z, None, sched.tau_min, sched, zero_denoiser)
    assert np.max(np.abs(out - z)) <= 1e-6


def test_consistency_zero_denoiser_closed_form():
    sched = make_schedule(steps=200)
    z = np.random.default_rng(6).random((4, 4, 3))
    tau = 100
    cs, co = boundary_coeffs(tau, sched)
    out = consistency_denoise(z, None, tau, sched, zero_denoiser)
    assert np.allclose(out, (cs + co / sched.alpha(tau)) * z, atol=1e-12)


def test_consistency_pointmass_substitution_oracle():
    # with the oracle denoiser eps = (z - alpha z0) / sigma the output
    # reduces to c_skip z + c_out z0
    sched = make_schedule(steps=200)
    rng = np.random.default_rng(7)
    z0 = rng.random((5, 5, 3))
    eps = rng.standard_normal((5, 5, 3))
    tau = 77
    a, s = sched.alpha(tau), sched.sigma(tau)
    z = a * z0 + s * eps

    def oracle(zz, cond, ti):
        return (zz - a * z0) / s

    out = consistency_denoise(z, None, tau, sched, oracle)
    cs, co = boundary_coeffs(tau, sched)
    assert np.max(np.abs(out - (cs * z + co * z0))) < 1e-5


def test_consistency_rejects_out_of_range():
    sched = make_schedule(steps=50)
    with pytest.raises(ValueError):
        consistency_denoise(np.zeros((2, 2, 3)), None, 51, sched, zero_denoiser)


# --- encoder / PCA / NSM -------------------------------------------------------


def test_encoder_uniform_image_constant_map():
    enc = ToyEncoder(8)
    fmap = encode_features(np.full((64, 64, 3), 0.42), enc)
    assert fmap.shape == (8, 8, 10)
    assert np.allclose(fmap, fmap[0, 0])


def test_encoder_shape_64_to_8():
    enc = ToyEncoder(8)
    img = np.random.default_rng(8).random((64, 64, 3))
    assert encode_features(img, enc).shape == (8, 8, 10)


def test_encoder_rejects_indivisible():
    enc = ToyEncoder(8)
    with pytest.raises(ValueError):
        encode_features(np.zeros((60, 64, 3)), enc)


def test_encoder_translation_equivariance():
    enc = ToyEncoder(8)
    rng = np.random.default_rng(9)
    img = rng.random((64, 64, 3))
    shifted = np.roll(img, 8, axis=1)
    a = encode_features(img, enc)
    b = encode_features(shifted, enc)
    # interior cells shift by one (gradient stencil touches patch borders,
    # so compare away from the wrap column)
    assert np.allclose(b[:, 2:7], a[:, 1:6], atol=1e-10)


def test_encoder_checkerboard_histogram_hand_check():
    # two-pixel vertical stripes: within-patch gradients are horizontal, so
    # all gradient mass lands in orientation bin 0 and the mean is gray.
    # Oracle: the skip-2 stencil sees |gx| = 1/2 at every interior column
    # (values two apart are always opposite), and 0 at the two image edges:
    # each patch row contributes 7 * 0.5, normalized by the 64 patch pixels.
    img = np.zeros((16, 16, 3))
    stripe = (np.arange(16) // 2) % 2 == 0
    img[:, stripe] = 1.0
    enc = ToyEncoder(8)
    fmap = encode_features(img, enc)
    hist = fmap[..., 6:]
    assert np.all(hist[..., 0] > 0)
    assert np.allclose(hist[..., 1:], 0.0, atol=1e-12)
    assert np.allclose(fmap[..., :3], 0.5, atol=1e-12)
    expected_bin0 = 8 * 7 * 0.5 / 64
    assert np.allclose(hist[..., 0], expected_bin0, atol=1e-12)


def test_pca_orthonormal_and_ordered():
    rng = np.random.default_rng(10)
    maps = [rng.random((6, 6, 10)) for _ in range(4)]
    basis = fit_pca(maps, 3)
    assert np.allclose(basis.components @ basis.components.T, np.eye(3), atol=1e-5)
    assert np.all(np.diff(basis.variance) <= 1e-12)


def test_pca_mean_projects_to_zero():
    rng = np.random.default_rng(11)
    maps = [rng.random((5, 5, 8)) for _ in range(3)]
    basis = fit_pca(maps, 2)
    coeffs = pca_project(basis, basis.mean.reshape(1, 1, -1))
    assert np.allclose(coeffs, 0.0, atol=1e-10)


def test_pca_finds_elongated_axis():
    # 2-feature cloud stretched along a known direction; eigh on the 2x2
    # covariance is the oracle
    rng = np.random.default_rng(12)
    direction = np.array([0.6, 0.8])
    n = 4000
    samples = np.outer(rng.normal(0, 3.0, n), direction) + rng.normal(0, 0.1, (n, 2))
    cov = np.cov(samples.T)
    evals, evecs = np.linalg.eigh(cov)
    oracle_axis = evecs[:, -1]
    basis = fit_pca([samples.reshape(n, 1, 2)], 1)
    cos = abs(float(basis.components[0] @ oracle_axis))
    assert cos > 0.999


def test_nsm_shape_and_purity():
    seq = textured_sphere_sequence(frames=4)
    enc = ToyEncoder(8)
    cams = [orbit_pose(a, 0.3, 1.7) for a in np.linspace(0, 2 * np.pi, 4)[:-1]]
    basis = fit_basis_on_grid(seq, cams, range(4), enc, 3, render_size=64)
    cfg = NsmConfig(8, 8, 3, render_size=64)
    m1 = neural_state_map(seq, cams[0], 2, enc, basis, cfg)
    m2 = neural_state_map(seq, cams[0], 2, enc, basis, cfg)
    assert m1.grid.shape == (8, 8, 3)
    assert np.array_equal(m1.grid, m2.grid)


def test_nsm_temporal_coherence_on_rotating_sphere():
    seq = textured_sphere_sequence(frames=6, radius0=0.4, radius1=0.4, wobble=0.0)
    for f in range(1, 6):
        th = f * 0.25
        r = np.array([[np.cos(th), 0, np.sin(th)], [0, 1, 0], [-np.sin(th), 0, np.cos(th)]])
        seq.offsets[f] = seq.vertices @ r.T - seq.vertices
    enc = ToyEncoder(8)
    cam = orbit_pose(0.5, 0.3, 1.7)
    basis = fit_basis_on_grid(seq, [cam], range(6), enc, 3, render_size=64)
    cfg = NsmConfig(8, 8, 3, render_size=64)
    grids = [neural_state_map(seq, cam, f, enc, basis, cfg).grid for f in range(6)]
    adjacent = np.mean([np.linalg.norm(grids[i + 1] - grids[i]) for i in range(5)])
    endpoints = np.linalg.norm(grids[-1] - grids[0])
    assert adjacent < endpoints
