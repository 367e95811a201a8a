import numpy as np
import pytest
import torch

from soundscene import separation as sep
from soundscene.encoder import AttenuationModel, encode_scene
from soundscene.scene import (
    AmbisonicBuffer,
    ListenerPose,
    MonoBuffer,
    Scene,
    SoundSource,
    SourceType,
)

NO_AIR = AttenuationModel(alpha=0.0)


def bandpass_noise(rng, n, lo, hi, fs=48000, floor_db=-60.0):
    """Band noise with a realistic noise floor.

    Exact spectral zeros (a brick-wall artifact no real band-limited signal
    has) make the log-magnitude landscape degenerate: every descent
    direction that grazes an all-zero bin is punished by the log floor.
    """
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    x = 0.1 * x / np.abs(x).max()
    return x + 0.1 * 10.0 ** (floor_db / 20.0) * rng.standard_normal(n)


def two_source_problem(seed=0, n=48000, d1=1.5, d2=3.0):
    """Disjoint-band sources at +-90 degrees; mixture built by the encoder."""
    rng = np.random.default_rng(seed)
    s1 = bandpass_noise(rng, n, 200, 800)
    s2 = bandpass_noise(rng, n, 2000, 8000)
    scene = Scene(
        [
            SoundSource("left", "l", SourceType.POINT, MonoBuffer(s1),
                        anchor_points=[[0.0, d1, 0.0]]),
            SoundSource("right", "r", SourceType.POINT, MonoBuffer(s2),
                        anchor_points=[[0.0, -d2, 0.0]]),
        ],
        alpha=0.0,
    )
    mixture = encode_scene(scene, ListenerPose.identity(), 1)
    problem = sep.SeparationProblem(
        mixture=mixture,
        sources=[
            sep.AnchoredSource("left", [[0.0, d1, 0.0]], SourceType.POINT),
            sep.AnchoredSource("right", [[0.0, -d2, 0.0]], SourceType.POINT),
        ],
        atten=NO_AIR,
    )
    return problem, (s1, s2)


def test_problem_validation():
    mix = AmbisonicBuffer(1, np.zeros((4, 64)))
    one = [sep.AnchoredSource("a", [[1, 0, 0]], SourceType.POINT)]
    with pytest.raises(ValueError, match="two sources"):
        sep.SeparationProblem(mix, one)
    with pytest.raises(ValueError):
        sep.AnchoredSource("g", [], SourceType.GLOBAL)
    with pytest.raises(ValueError):
        sep.AnchoredSource("p", np.zeros((0, 3)), SourceType.POINT)


def test_init_single_source_panning_gain():
    # mixture = encode of one front source; front probe returns 2x the
    # attenuated source for FOA (y^T y at the source direction)
    rng = np.random.default_rng(1)
    s = rng.standard_normal(4096) * 0.1
    scene = Scene(
        [SoundSource("f", "f", SourceType.POINT, MonoBuffer(s), anchor_points=[[2.0, 0, 0]])],
        alpha=0.0,
    )
    mixture = encode_scene(scene, ListenerPose.identity(), 1)
    problem = sep.SeparationProblem(
        mixture=mixture,
        sources=[
            sep.AnchoredSource("f", [[2.0, 0, 0]], SourceType.POINT),
            sep.AnchoredSource("other", [[0.0, 2.0, 0]], SourceType.POINT),
        ],
        atten=NO_AIR,
    )
    init = sep.init_sources(problem)
    assert np.allclose(init[0].samples, 2.0 * 0.5 * s, atol=1e-12)


def test_init_opposite_sources_suppress_cross_talk():
    problem, (s1, s2) = two_source_problem()
    init = sep.init_sources(problem)
    # left probe of [W, Y] = [g1 s1 + g2 s2, g1 s1 - g2 s2] cancels s2 exactly
    sdr1 = sep.si_sdr(init[0].samples, s1)
    sdr2 = sep.si_sdr(init[1].samples, s2)
    assert sdr1 > 40 and sdr2 > 40


def test_init_zero_mixture_zero_inits():
    problem, _ = two_source_problem()
    problem.mixture.data[:] = 0.0
    init = sep.init_sources(problem)
    assert all(not b.samples.any() for b in init)


def test_coincident_directions_warn():
    mix = AmbisonicBuffer(1, np.random.default_rng(0).standard_normal((4, 2048)))
    problem = sep.SeparationProblem(
        mix,
        [
            sep.AnchoredSource("a", [[1.0, 0, 0]], SourceType.POINT),
            sep.AnchoredSource("b", [[2.0, 0, 0]], SourceType.POINT),  # same direction
        ],
    )
    with pytest.warns(UserWarning, match="share a direction"):
        init = sep.init_sources(problem)
    assert np.array_equal(init[0].samples, init[1].samples)


def test_adjoint_gradient_matches_analytic_and_fd():
    # gradient of ||G^T S - M||^2 w.r.t. S is the adjoint-encoded residual
    problem, _ = two_source_problem(n=2048)
    gains = torch.tensor(sep.gain_matrix(problem), dtype=torch.float64)
    mix = torch.tensor(problem.mixture.data, dtype=torch.float64)
    rng = np.random.default_rng(3)
    waves = torch.tensor(rng.standard_normal((2, 2048)) * 0.1, requires_grad=True)

    loss = torch.sum((gains.T @ waves - mix) ** 2)
    loss.backward()
    residual = (gains.T @ waves.detach() - mix).numpy()
    analytic = 2.0 * sep.gain_matrix(problem) @ residual
    assert np.allclose(waves.grad.numpy(), analytic, atol=1e-10)

    # spot-check three waveform samples with central differences
    def value(w):
        return float(torch.sum((gains.T @ w - mix) ** 2))

    for i, t in ((0, 10), (1, 999), (0, 2000)):
        h = 1e-4 * 0.1
        with torch.no_grad():
            plus = waves.clone(); plus[i, t] += h
            minus = waves.clone(); minus[i, t] -= h
        fd = (value(plus) - value(minus)) / (2 * h)
        an = float(waves.grad[i, t])
        assert abs(fd - an) / max(abs(fd), abs(an), 1e-12) < 1e-3


def test_lmag_waveform_gradients_match_fd():
    problem, _ = two_source_problem(n=4096)
    gains = torch.tensor(sep.gain_matrix(problem), dtype=torch.float64)
    mix = torch.tensor(problem.mixture.data, dtype=torch.float64)
    rng = np.random.default_rng(4)
    waves = torch.tensor(rng.standard_normal((2, 4096)) * 0.1, requires_grad=True)

    def loss_of(w):
        return sep.l_mag_torch(gains.T @ w, mix)

    loss = loss_of(waves)
    loss.backward()
    for i, t in ((0, 100), (1, 2048), (0, 4000), (1, 17)):
        h = 1e-4 * 0.1
        with torch.no_grad():
            plus = waves.detach().clone(); plus[i, t] += h
            minus = waves.detach().clone(); minus[i, t] -= h
        fd = (float(loss_of(plus)) - float(loss_of(minus))) / (2 * h)
        an = float(waves.grad[i, t])
        assert abs(fd - an) / max(abs(fd), abs(an), 1e-12) < 1e-3


def test_exact_init_is_fixed_point():
    problem, (s1, s2) = two_source_problem(n=8192)
    exact = [MonoBuffer(s1), MonoBuffer(s2)]
    res = sep.separate(problem, iters=1, init=exact)
    assert res.losses[0] < 1e-9
    assert not res.diverged


def test_two_source_separation_quality():
    problem, (s1, s2) = two_source_problem()
    res = sep.separate(problem, iters=500)
    assert not res.diverged
    assert sep.si_sdr(res.sources[0].samples, s1) >= 10.0
    assert sep.si_sdr(res.sources[1].samples, s2) >= 10.0
    final = sep.rendered_l_mag(problem, res.sources)
    initial = sep.rendered_l_mag(problem, sep.init_sources(problem))
    assert final <= 0.1 * initial
    assert np.all(np.diff(res.trace) <= 0)


def test_permutation_consistency():
    problem, _ = two_source_problem()
    swapped = sep.SeparationProblem(
        mixture=problem.mixture,
        sources=[problem.sources[1], problem.sources[0]],
        pose=problem.pose,
        atten=problem.atten,
    )
    a = sep.separate(problem, iters=40)
    b = sep.separate(swapped, iters=40)
    assert np.allclose(a.sources[0].samples, b.sources[1].samples, atol=1e-12)
    assert np.allclose(a.sources[1].samples, b.sources[0].samples, atol=1e-12)


def test_si_sdr_properties():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(1000)
    assert sep.si_sdr(3.0 * x, x) > 250  # scale invariant
    noisy = x + 0.1 * rng.standard_normal(1000)
    assert 15 < sep.si_sdr(noisy, x) < 25
