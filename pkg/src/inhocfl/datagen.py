"""Synthetic per-closed-loop slice datasets.

Each closed-loop (CL) observes five features per sample: the traffic of the
three OTT applications carried by its slice, the TRP's CQI and the fraction
of MIMO full-rank usage.  The target is CPU load in percent.

Traffic units and ranges are invented (the real traces are private); the
values below only aim for CPU loads that mostly fall in [0, 10] %.

Ground truth::

    cpu = c0 + c1 * sum(traffic) * (q / 15) * (1 + c2 * mimo) + noise

clamped to [0, 100], where ``q = cqi`` under the default increasing
convention and ``q = 16 - cqi`` when ``cqi_sign = -1``.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import rng as rngmod

SLICES = ("eMBB", "SocialMedia", "Browsing")
FEATURES = ("ott1", "ott2", "ott3", "cqi", "mimo")
N_FEATURES = len(FEATURES)
CQI_MIN, CQI_MAX = 1.0, 15.0

# spread of the per-sample draws; per-CL shifts are scaled by noniid_shift
TRAFFIC_SIGMA = 0.5
CQI_STD = 2.5
CQI_OFFSET_STD = 2.0
MIMO_CONCENTRATION = 10.0


@dataclass(frozen=True)
class SliceSpec:
    slice_id: str
    ott_names: tuple
    traffic_scale: float
    cqi_mean: float
    mimo_fullrank_mean: float

    def __post_init__(self):
        if self.slice_id not in SLICES:
            raise ValueError(f"unknown slice_id {self.slice_id!r}")
        if len(self.ott_names) != 3:
            raise ValueError("a slice carries exactly 3 OTT applications")
        if not self.traffic_scale > 0:
            raise ValueError("traffic_scale must be positive")
        if not CQI_MIN <= self.cqi_mean <= CQI_MAX:
            raise ValueError("cqi_mean must lie in [1, 15]")
        if not 0.0 <= self.mimo_fullrank_mean <= 1.0:
            raise ValueError("mimo_fullrank_mean must lie in [0, 1]")


DEFAULT_SPECS = {
    "eMBB": SliceSpec("eMBB", ("Netflix", "Youtube", "Facebook Video"), 1.6, 9.0, 0.35),
    "SocialMedia": SliceSpec("SocialMedia", ("Facebook", "Whatsapp", "Instagram"), 1.4, 9.5, 0.25),
    "Browsing": SliceSpec("Browsing", ("Apple", "HTTP", "QUIC"), 1.3, 10.0, 0.2),
}


@dataclass(frozen=True)
class GroundTruth:
    c0: float = 0.5
    c1: float = 0.6
    c2: float = 0.5
    noise_std: float = 0.2
    cqi_sign: int = 1

    def __post_init__(self):
        if self.cqi_sign not in (1, -1):
            raise ValueError("cqi_sign must be +1 or -1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass(frozen=True, eq=False)
class SliceDataset:
    features: np.ndarray
    targets: np.ndarray
    cl_id: int
    slice_id: str
    seed: int

    def __len__(self):
        return len(self.targets)

    def subset(self, idx):
        return SliceDataset(self.features[idx], self.targets[idx], self.cl_id, self.slice_id, self.seed)


def ground_truth_cpu(x, truth=GroundTruth()):
    """Noise-free CPU load (%) for one feature row or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    traffic = x[..., 0] + x[..., 1] + x[..., 2]
    cqi = x[..., 3]
    q = cqi if truth.cqi_sign == 1 else (CQI_MAX + 1.0) - cqi
    cpu = truth.c0 + truth.c1 * traffic * (q / CQI_MAX) * (1.0 + truth.c2 * x[..., 4])
    return np.clip(cpu, 0.0, 100.0)


def distribution_params(spec, cl_id, noniid_shift, seed):
    """Per-CL sampling parameters: traffic means, CQI mean, MIMO Beta shape."""
    g = rngmod.substream(seed, rngmod.DATA, SLICES.index(spec.slice_id), cl_id, 0)
    mix = g.dirichlet(np.ones(3))
    cqi_offset = g.normal(0.0, CQI_OFFSET_STD)
    mimo_offset = g.normal(0.0, 0.05)
    traffic_mean = spec.traffic_scale * (3.0 * mix) ** noniid_shift
    cqi_mean = float(np.clip(spec.cqi_mean + noniid_shift * cqi_offset, CQI_MIN, CQI_MAX))
    mimo_mean = float(np.clip(spec.mimo_fullrank_mean + noniid_shift * mimo_offset, 0.02, 0.98))
    return {
        "traffic_mean": traffic_mean,
        "cqi_mean": cqi_mean,
        "mimo_a": mimo_mean * MIMO_CONCENTRATION,
        "mimo_b": (1.0 - mimo_mean) * MIMO_CONCENTRATION,
    }


def generate_cl_dataset(spec, cl_id, size, noniid_shift, seed, truth=GroundTruth()):
    """Draw the local dataset of closed-loop ``cl_id`` for slice ``spec``.

    Output is a pure function of the arguments (Philox substream keyed by
    seed, slice and CL).
    """
    if int(size) < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    if noniid_shift < 0:
        raise ValueError("noniid_shift must be >= 0")
    size = int(size)
    p = distribution_params(spec, cl_id, noniid_shift, seed)
    g = rngmod.substream(seed, rngmod.DATA, SLICES.index(spec.slice_id), cl_id, 1)

    mean = p["traffic_mean"]
    traffic = g.lognormal(np.log(mean) - TRAFFIC_SIGMA**2 / 2, TRAFFIC_SIGMA, size=(size, 3))
    lo = (CQI_MIN - p["cqi_mean"]) / CQI_STD
    hi = (CQI_MAX - p["cqi_mean"]) / CQI_STD
    cqi = stats.truncnorm.rvs(lo, hi, loc=p["cqi_mean"], scale=CQI_STD, size=size, random_state=g)
    mimo = g.beta(p["mimo_a"], p["mimo_b"], size=size)

    features = np.column_stack([traffic, np.clip(cqi, CQI_MIN, CQI_MAX), mimo])
    targets = ground_truth_cpu(features, truth)
    if truth.noise_std > 0:
        targets = np.clip(targets + g.normal(0.0, truth.noise_std, size=size), 0.0, 100.0)
    return SliceDataset(features, targets, int(cl_id), spec.slice_id, int(seed))


def train_test_split(dataset, seed, test_fraction=0.2):
    """Seeded per-CL split; returns (train, test)."""
    n = len(dataset)
    g = rngmod.substream(seed, rngmod.SPLIT, SLICES.index(dataset.slice_id), dataset.cl_id)
    perm = g.permutation(n)
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n_test >= n:
        raise ValueError(f"cannot split {n} samples with test_fraction={test_fraction}")
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))


def js_divergence(a, b, bins=30, value_range=None):
    """Jensen-Shannon divergence (base 2) between two empirical histograms."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if value_range is None:
        value_range = (min(a.min(), b.min()), max(a.max(), b.max()))
    pa, _ = np.histogram(a, bins=bins, range=value_range)
    pb, _ = np.histogram(b, bins=bins, range=value_range)
    pa = pa / pa.sum()
    pb = pb / pb.sum()
    m = 0.5 * (pa + pb)

    def kl(p, q):
        nz = p > 0
        return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))

    return 0.5 * kl(pa, m) + 0.5 * kl(pb, m)


CSV_HEADER = ("ott1", "ott2", "ott3", "cqi", "mimo", "cpu")


def save_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row, y in zip(dataset.features, dataset.targets):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def load_csv(path, cl_id=1, slice_id="eMBB", seed=0):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = [[float(v) for v in line] for line in r if line]
    if not rows:
        raise ValueError(f"{path}: no samples")
    arr = np.array(rows, dtype=np.float64)
    if arr.shape[1] != len(CSV_HEADER):
        raise ValueError(f"{path}: expected {len(CSV_HEADER)} columns")
    return SliceDataset(arr[:, :N_FEATURES], arr[:, N_FEATURES], cl_id, slice_id, seed)
