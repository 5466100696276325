"""Two-Gaussian covariate shift with a known labeling rule.

Source and target are zero-mean Gaussians with diagonal covariances that
differ only in the first coordinate (flat source, tall target), so the shift
is a rate shift and the importance weight depends on ``x_1`` alone. Labels
are binary with ``p(y=1 | x) = sigmoid(label_slope * x_1)``, and the score of
a label is its true conditional probability.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import expit, logit

from .rejection import stream_rng


@dataclass(frozen=True)
class TwoGaussianConfig:
    d: int = 8
    source_var1: float = 25.0
    other_var: float = 0.1
    target_var1: float = 1.0
    label_slope: float = 5.0
    m: int = 2000
    n: int = 2000
    test_size: int = 10000
    seed: int = 0
    # std of per-example noise on the domain classifier's logit; 0 gives the Bayes classifier
    domain_noise: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if min(self.source_var1, self.other_var, self.target_var1) <= 0:
            raise ValueError("variances must be positive")
        if min(self.m, self.n, self.test_size) < 1:
            raise ValueError("sample counts must be positive")
        if self.domain_noise < 0:
            raise ValueError("domain_noise must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def b(self) -> float:
        """Supremum of the true importance weight, attained at ``x_1 = 0``."""
        if self.target_var1 > self.source_var1:
            return float("inf")
        return float(np.sqrt(self.source_var1 / self.target_var1))

    def true_iw(self, x1) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        s2, t2 = self.source_var1, self.target_var1
        return np.sqrt(s2 / t2) * np.exp(-0.5 * x1**2 * (1.0 / t2 - 1.0 / s2))

    def domain_prob(self, x1, noise=0.0) -> np.ndarray:
        """``g(source | x)`` for equal class priors, with additive logit noise."""
        log_ratio = np.log(self.true_iw(x1))  # log q/p
        return expit(-log_ratio + np.asarray(noise, dtype=float))

    def label_prob(self, x1) -> np.ndarray:
        return expit(self.label_slope * np.asarray(x1, dtype=float))

    def true_label_scores(self, x1, y) -> np.ndarray:
        p1 = self.label_prob(x1)
        return np.where(np.asarray(y) == 1, p1, 1.0 - p1)

    def label_scores(self, x1) -> np.ndarray:
        """``(n, 2)`` score matrix over labels {0, 1}."""
        p1 = self.label_prob(x1)
        return np.column_stack([1.0 - p1, p1])

    def target_error(self, tau: float) -> float:
        """Exact target miscoverage of ``C_tau``, by quadrature over ``x_1``."""
        if tau <= 0.0:
            return 0.0
        if tau > 1.0:
            return 1.0
        if tau == 1.0:
            # only labels with probability exactly one are covered
            return 1.0
        sd = np.sqrt(self.target_var1)
        # sigmoid(a x) < tau  <=>  x < logit(tau) / a ; by symmetry both labels contribute equally
        cut = float(logit(tau) / self.label_slope)

        def integrand(x):
            return expit(self.label_slope * x) * np.exp(-0.5 * (x / sd) ** 2) / (sd * np.sqrt(2 * np.pi))

        val, _ = integrate.quad(integrand, -np.inf, cut, epsabs=1e-12, epsrel=1e-10)
        return float(min(1.0, 2.0 * val))


@dataclass
class ShiftData:
    """One draw of the synthetic shift.

    ``*_noise`` arrays hold the domain classifier's logit error for each
    example, so heuristic weights are a fixed (if wrong) function of the draw.
    """

    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    config: TwoGaussianConfig
    source_noise: np.ndarray = None
    target_noise: np.ndarray = None
    test_noise: np.ndarray = None

    def __post_init__(self):
        for name, x in (("source_noise", self.source_x), ("target_noise", self.target_x),
                        ("test_noise", self.test_x)):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(len(x)))

    @property
    def source_true_scores(self) -> np.ndarray:
        return self.config.true_label_scores(self.source_x[:, 0], self.source_y)

    @property
    def source_true_iw(self) -> np.ndarray:
        return self.config.true_iw(self.source_x[:, 0])

    @property
    def source_domain_prob(self) -> np.ndarray:
        return self.config.domain_prob(self.source_x[:, 0], self.source_noise)

    @property
    def target_domain_prob(self) -> np.ndarray:
        return self.config.domain_prob(self.target_x[:, 0], self.target_noise)

    @property
    def test_domain_prob(self) -> np.ndarray:
        return self.config.domain_prob(self.test_x[:, 0], self.test_noise)

    @property
    def test_true_scores(self) -> np.ndarray:
        return self.config.true_label_scores(self.test_x[:, 0], self.test_y)

    @property
    def test_label_scores(self) -> np.ndarray:
        return self.config.label_scores(self.test_x[:, 0])

    @property
    def b(self) -> float:
        return self.config.b


def _gaussian(rng, size, var1, other_var, d):
    sd = np.full(d, np.sqrt(other_var))
    sd[0] = np.sqrt(var1)
    return rng.standard_normal((size, d)) * sd


def _labels(rng, config, x):
    return (rng.random(len(x)) < config.label_prob(x[:, 0])).astype(int)


def _noise(rng, config, size):
    return config.domain_noise * rng.standard_normal(size)


def sample_calibration(config: TwoGaussianConfig, seed) -> dict:
    """Labeled source calibration set and unlabeled target set."""
    rng = stream_rng(seed, "calibration")
    sx = _gaussian(rng, config.m, config.source_var1, config.other_var, config.d)
    sy = _labels(rng, config, sx)
    tx = _gaussian(rng, config.n, config.target_var1, config.other_var, config.d)
    return {
        "source_x": sx,
        "source_y": sy,
        "target_x": tx,
        "source_noise": _noise(rng, config, config.m),
        "target_noise": _noise(rng, config, config.n),
    }


def sample_test(config: TwoGaussianConfig, seed) -> dict:
    rng = stream_rng(seed, "test")
    x = _gaussian(rng, config.test_size, config.target_var1, config.other_var, config.d)
    y = _labels(rng, config, x)
    return {"test_x": x, "test_y": y, "test_noise": _noise(rng, config, config.test_size)}


def synth_two_gaussian(config: TwoGaussianConfig, seed=None) -> ShiftData:
    seed = config.seed if seed is None else seed
    return ShiftData(config=config, **sample_calibration(config, seed), **sample_test(config, seed))
