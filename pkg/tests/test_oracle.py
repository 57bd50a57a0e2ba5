import numpy as np
import pytest

from copfama.channel import (
    FiniteScattering,
    RichScattering,
    generate_snapshot,
    noise_variance,
    qpsk_constellation,
)
from copfama.encoding import Mask, encode
from copfama.geometry import build_geometry
from copfama.impute import ZeroImputer, oracle_imputer_for
from copfama.oracle import OracleImputer, build_joint, flat_permutation, mixture_posterior
from copfama.simulate import SnapshotSimulator


@pytest.fixture(scope="module")
def geo4():
    return build_geometry(1, num_ports=4, aperture=0.5)


def _joints(model, num_users, signal_power, noise_var):
    return [
        build_joint(model.correlation, model.omega_h, num_users, signal_power,
                    noise_var, complex(s))
        for s in qpsk_constellation(signal_power)
    ]


def test_joint_symmetric(geo4):
    model = RichScattering(geo4)
    for joint in _joints(model, 3, 1.0, 0.1):
        assert np.max(np.abs(joint - joint.T)) < 1e-12
        assert np.linalg.eigvalsh(joint).min() > -1e-10


def test_joint_single_user_noiseless(geo4):
    # U=1, no noise, s_u = sqrt(P_s): r = h * s_u so Cov(r) = P_s Cov(h)
    model = RichScattering(geo4)
    p_s = 2.0
    joint = build_joint(model.correlation, 1.0, 1, p_s, 0.0, complex(np.sqrt(p_s)))
    perm = flat_permutation(4)
    inv = np.argsort(perm)
    blocks = joint[np.ix_(inv, inv)]
    k = 4
    cov_rr = blocks[:k, :k]
    cov_hh = blocks[2 * k : 3 * k, 2 * k : 3 * k]
    assert np.allclose(cov_rr, p_s * cov_hh, atol=1e-12)


def test_joint_matches_simulation(geo4):
    model = RichScattering(geo4)
    num_users, p_s, snr = 3, 1.0, 10.0
    sigma2 = noise_variance(model.reference_gain, p_s, snr)
    s_u = complex(qpsk_constellation(p_s)[0])
    joint = build_joint(model.correlation, model.omega_h, num_users, p_s, sigma2, s_u)
    rng = np.random.default_rng(0)
    flats = []
    for _ in range(30_000):
        snap = generate_snapshot(model, num_users, p_s, snr, rng)
        # pin the desired symbol by rotating: r and h s_u are jointly
        # circular, so rebuild r with the fixed symbol instead
        r = snap.h * s_u + snap.interference + snap.noise
        snap.r = r
        snap.symbol = s_u
        flats.append(encode(snap).flat())
    flats = np.stack(flats)
    emp = flats.T @ flats / flats.shape[0]
    assert np.linalg.norm(emp - joint) < 0.05 * np.linalg.norm(joint)


def test_mixture_no_observations(geo4):
    model = RichScattering(geo4)
    joints = _joints(model, 2, 1.0, 0.1)
    post = mixture_posterior(joints, np.array([], dtype=int), np.array([]))
    assert np.allclose(post.weights, 0.25)
    assert np.allclose(post.mean, 0.0)
    assert np.allclose(post.covariances[0], joints[0])


def test_mixture_weights_sum_to_one(geo4):
    model = RichScattering(geo4)
    joints = _joints(model, 2, 1.0, 0.1)
    rng = np.random.default_rng(1)
    for _ in range(10):
        obs = np.sort(rng.choice(24, size=6, replace=False))
        post = mixture_posterior(joints, obs, rng.standard_normal(6))
        assert np.sum(post.weights) == pytest.approx(1.0, abs=1e-12)
        assert np.all(post.weights >= 0)


def test_posterior_variance_contracts(geo4):
    model = RichScattering(geo4)
    joints = _joints(model, 2, 1.0, 0.1)
    obs = np.arange(4)
    post = mixture_posterior(joints, obs, np.random.default_rng(2).standard_normal(4))
    for q, joint in enumerate(joints):
        prior_var = np.diag(joint)[post.missing]
        cond_var = np.diag(post.covariances[q])
        assert np.all(cond_var <= prior_var + 1e-10)


def test_observed_coordinates_pass_through(geo4):
    sim = SnapshotSimulator(RichScattering(geo4), 2, 1.0, 10.0)
    oracle = oracle_imputer_for(sim)
    rng = np.random.default_rng(3)
    snap = sim.snapshot(rng)
    x = encode(snap).flat()
    mask = Mask([0, 2], 4)
    mean = oracle.posterior_mean(x, mask)
    obs = mask.flat_indicator()
    assert np.array_equal(mean[obs], x[obs])
    draws = oracle.sample(x, mask, 8, rng)
    assert np.array_equal(draws[:, obs], np.tile(x[obs], (8, 1)))


def test_oracle_beats_zero_predictor(geo4):
    sim = SnapshotSimulator(RichScattering(geo4), 3, 1.0, 10.0)
    oracle = oracle_imputer_for(sim)
    zero = ZeroImputer(geo4)
    rng = np.random.default_rng(4)
    mask = Mask([1], 4)
    tgt = ~mask.flat_indicator()
    err_o, err_z, power = 0.0, 0.0, 0.0
    for _ in range(400):
        x = encode(sim.snapshot(rng)).flat()
        err_o += np.sum((oracle.posterior_mean(x, mask)[tgt] - x[tgt]) ** 2)
        err_z += np.sum((zero.posterior_mean(x, mask)[tgt] - x[tgt]) ** 2)
        power += np.sum(x[tgt] ** 2)
    assert err_o < err_z
    assert err_o / power < 1.0


def test_full_pilot_high_snr_interference_recovery(geo4):
    # with (r, h) observed everywhere and little noise, I = r - h s_u is
    # nearly determined up to the symbol hypothesis
    sim = SnapshotSimulator(RichScattering(geo4), 2, 1.0, 40.0)
    oracle = oracle_imputer_for(sim)
    zero = ZeroImputer(geo4)
    rng = np.random.default_rng(5)
    mask = Mask(np.arange(4), 4)
    tgt = ~mask.flat_indicator()
    err_o, err_z = 0.0, 0.0
    for _ in range(200):
        x = encode(sim.snapshot(rng)).flat()
        err_o += np.sum((oracle.posterior_mean(x, mask)[tgt] - x[tgt]) ** 2)
        err_z += np.sum((zero.posterior_mean(x, mask)[tgt] - x[tgt]) ** 2)
    assert err_o < err_z


def test_oracle_rejects_finite_family(geo4):
    model = FiniteScattering(geo4)
    with pytest.raises(ValueError):
        OracleImputer(model, 2, 1.0, 0.1)


def test_flat_permutation_bijection():
    perm = flat_permutation(5)
    assert sorted(perm.tolist()) == list(range(30))
