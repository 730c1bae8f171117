"""Difference-frequency conversion efficiency, loss bookkeeping and the
figures of merit derived from it (mu_1 and converted cross-correlation).

Units: ``beta`` in 1/(W cm^2), waveguide length in cm, pump power in W
(coupled into the waveguide unless a function says otherwise).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

PUMP_COUPLING = 0.90


class FitError(RuntimeError):
    """Raised when the efficiency fit cannot produce an estimate."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class ConversionParams:
    eta_max: float = 0.95
    beta: float = 0.54
    length_cm: float = 2.7
    pump_power_w: float = 0.2 * PUMP_COUPLING

    def __post_init__(self):
        if not 0 <= self.eta_max <= 1:
            raise ValueError(f"eta_max must lie in [0, 1], got {self.eta_max}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.length_cm > 0:
            raise ValueError(f"length_cm must be positive, got {self.length_cm}")
        if not self.pump_power_w >= 0:
            raise ValueError(f"pump_power_w must be >= 0, got {self.pump_power_w}")


@dataclass(frozen=True)
class OpticalPath:
    input_coupling: float = 0.70
    fiber_coupling: float = 0.80
    filter_transmission: float = 0.80
    fbg_transmission: float = 0.60
    detector_efficiency: float = 0.10

    def __post_init__(self):
        for name in ("input_coupling", "fiber_coupling", "filter_transmission",
                     "fbg_transmission", "detector_efficiency"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")

    @property
    def device_factor(self) -> float:
        """Loss factor between internal and device efficiency."""
        return self.input_coupling * self.fiber_coupling * self.filter_transmission


@dataclass
class EfficiencyFit:
    beta_hat: float
    beta_sigma: float
    eta_max_hat: float
    eta_max_sigma: float
    covariance: np.ndarray
    n_mc: int
    length_cm: float
    seed: int | None = None
    chi2: float = float("nan")
    n_failed: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "beta_per_w_cm2": self.beta_hat,
            "beta_sigma": self.beta_sigma,
            "eta_max": self.eta_max_hat,
            "eta_max_sigma": self.eta_max_sigma,
            "covariance": np.asarray(self.covariance).tolist(),
            "n_mc": self.n_mc,
            "n_failed": self.n_failed,
            "length_cm": self.length_cm,
            "chi2": self.chi2,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class G2Prediction:
    g2_si: float
    mu_in: float
    mu1: float
    g2_ci: float

    def to_dict(self) -> dict:
        return {"g2_si": self.g2_si, "mu_in": self.mu_in, "mu1": self.mu1, "g2_ci": self.g2_ci}


def internal_efficiency(p: ConversionParams) -> float:
    u = p.length_cm * math.sqrt(p.beta * p.pump_power_w)
    return p.eta_max * math.sin(u) ** 2


def device_efficiency(internal: float, path: OpticalPath) -> float:
    """Photon in front of the waveguide -> photon in the detector fibre.

    Detector efficiency is deliberately left out.
    """
    if not 0 <= internal <= 1:
        raise ValueError(f"internal efficiency must lie in [0, 1], got {internal}")
    return internal * path.device_factor


def mu1(mu_in: float, snr: float) -> float:
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    if not mu_in > 0:
        raise ValueError(f"mu_in must be positive, got {mu_in}")
    return mu_in / snr


def g2_after_conversion(g2_si: float, mu_in: float, mu1_: float) -> float:
    """Signal-idler cross-correlation after converting one photon of the pair.

    ``g2_si = inf`` returns the limiting value ``mu_in / mu1 + 1``.
    """
    if not mu1_ > 0:
        raise ValueError(f"mu1 must be positive, got {mu1_}")
    if not mu_in > 0:
        raise ValueError(f"mu_in must be positive, got {mu_in}")
    if not g2_si >= 1:
        raise ValueError(f"g2_si must be >= 1, got {g2_si}")
    x = mu_in / mu1_
    if math.isinf(g2_si):
        return x + 1.0
    return g2_si * (x + 1.0) / (x + g2_si)


def predict_g2(g2_si: float, mu_in: float, mu1_: float) -> G2Prediction:
    return G2Prediction(g2_si, mu_in, mu1_, g2_after_conversion(g2_si, mu_in, mu1_))


def mu1_from_slope(slope_per_us: float, fwhm_s: float) -> float:
    """mu_1 on a line through the origin, slope quoted per microsecond of pulse FWHM."""
    return slope_per_us * fwhm_s * 1e6


def _initial_guess(power, internal, length_cm):
    em0 = float(np.max(internal))
    # low-power limit: eta ~ eta_max * L^2 * beta * P
    k = max(2, len(power) // 3)
    order = np.argsort(power)[:k]
    p, y = power[order], internal[order]
    slope = float(np.dot(p, y) / np.dot(p, p))
    beta0 = slope / (em0 * length_cm**2)
    # keep the first sin^2 lobe
    umax = length_cm * math.sqrt(beta0 * float(np.max(power)))
    if not beta0 > 0 or umax >= math.pi / 2:
        beta0 = (0.45 * math.pi / length_cm) ** 2 / float(np.max(power))
    return beta0, em0


def fit_efficiency_curve(points, path: OpticalPath, length_cm: float, n_mc: int = 1000,
                         seed: int = 0, chunk: int = 250, keep_samples: bool = False) -> EfficiencyFit:
    """Least-squares fit of (beta, eta_max) with a parametric Monte Carlo error.

    ``points`` is an (N, 3) array of (pump power coupled in W, device
    efficiency, sigma). Each MC trial redraws every point from a normal
    centred on the best-fit curve with that point's sigma and refits. Trials
    are generated in chunks seeded by ``(seed, chunk_index)`` so any split
    of the work reproduces the same ensemble.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be an (N, 3) array of power, efficiency, sigma")
    if pts.shape[0] < 4:
        raise ValueError(f"need at least 4 points, got {pts.shape[0]}")
    if n_mc < 100:
        raise ValueError(f"n_mc must be >= 100, got {n_mc}")
    power, eff, sig = pts.T
    if np.any(sig <= 0):
        raise ValueError("sigmas must be positive")
    if np.any(power < 0) or np.ptp(power) <= 1e-6 * np.max(power) or np.count_nonzero(power > 0) < 2:
        raise FitError("degenerate pump power range")
    scale = path.device_factor
    internal = eff / scale
    isig = sig / scale

    p0 = _initial_guess(power, internal, length_cm)
    best, ok, chi2 = kernels.lm_sin2(power, internal[None, :], isig[None, :], length_cm, p0)
    if not ok[0] or not np.all(np.isfinite(best)):
        raise FitError("fit did not converge", residual=float(chi2[0]))
    beta_hat, em_hat = best[0]

    s = np.sin(length_cm * math.sqrt(beta_hat) * np.sqrt(power))
    model = em_hat * s * s
    samples = []
    failed = 0
    root = np.random.SeedSequence(seed)
    for ci, start in enumerate(range(0, n_mc, chunk)):
        m = min(chunk, n_mc - start)
        rng = np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(ci,)))
        y = model[None, :] + rng.standard_normal((m, power.size)) * isig[None, :]
        par, conv, _ = kernels.lm_sin2(power, y, np.broadcast_to(isig, y.shape), length_cm, best[0])
        good = conv & np.all(np.isfinite(par), axis=1)
        failed += int(m - good.sum())
        samples.append(par[good])
    samples = np.concatenate(samples)
    if failed > 0.05 * n_mc:
        raise FitError(f"{failed} of {n_mc} Monte Carlo refits failed", residual=float(chi2[0]))
    cov = np.cov(samples.T)
    return EfficiencyFit(
        beta_hat=float(beta_hat), beta_sigma=float(math.sqrt(cov[0, 0])),
        eta_max_hat=float(em_hat), eta_max_sigma=float(math.sqrt(cov[1, 1])),
        covariance=cov, n_mc=n_mc, length_cm=length_cm, seed=seed, chi2=float(chi2[0]),
        n_failed=failed, samples=samples if keep_samples else None,
    )


def synthetic_efficiency_points(rng, beta=0.54, eta_max=0.95, length_cm=2.7, path=None,
                                powers=None, rel_noise=0.02):
    """Device-efficiency data drawn from the sin^2 law with relative Gaussian noise."""
    path = path or OpticalPath()
    if powers is None:
        powers = np.linspace(0.02, 0.20, 10)
    powers = np.asarray(powers, dtype=float)
    true = eta_max * np.sin(length_cm * np.sqrt(beta * powers)) ** 2 * path.device_factor
    sig = rel_noise * true
    obs = true + sig * rng.standard_normal(true.shape)
    return np.column_stack([powers, obs, sig])


def read_efficiency_csv(path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    names = data.dtype.names
    if names is None or not {"power_w", "efficiency", "sigma"} <= set(names):
        raise ValueError("CSV needs columns power_w, efficiency, sigma")
    return np.column_stack([np.atleast_1d(data["power_w"]), np.atleast_1d(data["efficiency"]),
                            np.atleast_1d(data["sigma"])])
