"""Seeded generators for the synthetic experiment settings.

Every generator returns ``(Dataset, GroundTruth)`` where the ground truth
retains everything needed to (a) redraw fresh data from the same process for
oracle risk evaluation and (b) serialize the setting. Generation is
deterministic under the supplied ``numpy.random.Generator``.

Datasets serialize to a columnar CSV (header ``z_0..z_{d-1},y``) with a JSON
sidecar holding the kind and the ground truth; floats are written with
``repr`` so both formats round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit as sigmoid

from .core import BINARY, Dataset, REGRESSION
from .linreg_known import vandermonde_expand

__all__ = [
    "GroundTruth",
    "resolve_function",
    "gen_linreg",
    "gen_gaussian_mean",
    "gen_polynomial",
    "gen_gmm_noise",
    "gen_uniform_noise",
    "gen_logistic",
    "draw_from_truth",
    "write_dataset",
    "read_dataset",
    "sidecar_path",
]

_DESIGNS = ("normal", "vandermonde")
_NOISE_NAMES = ("gaussian", "gmm", "uniform", "none")


def resolve_function(spec):
    """Map a named-function spec to a callable.

    Built-ins: ``"parabola"`` (z^2 + 5), ``"exp"``, and
    ``{"name": "constant", "value": c}``.
    """
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    if name == "parabola":
        return lambda z: z**2 + 5.0
    if name == "exp":
        return np.exp
    if name == "constant":
        value = float(spec["value"])
        return lambda z: np.full_like(np.asarray(z, dtype=float), value)
    raise ValueError(f"unknown function spec {spec!r}")


@dataclass(frozen=True)
class GroundTruth:
    """The generating process: design law, signal, and noise law."""

    kind: str
    d: int
    design: str  # "normal" (i.i.d. standard normal rows) or "vandermonde"
    noise: dict | None
    theta_star: np.ndarray | None = None
    f: dict | None = None  # named function spec for vandermonde designs

    def __post_init__(self):
        if self.design not in _DESIGNS:
            raise ValueError(f"design must be one of {_DESIGNS}")
        if self.noise is not None and self.noise.get("name") not in _NOISE_NAMES:
            raise ValueError(f"unknown noise spec {self.noise!r}")
        if self.theta_star is not None:
            object.__setattr__(
                self, "theta_star", np.asarray(self.theta_star, dtype=float).ravel()
            )

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "design": self.design,
            "noise": self.noise,
            "theta_star": None
            if self.theta_star is None
            else [float(v) for v in self.theta_star],
            "f": self.f,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(
            kind=obj["kind"],
            d=int(obj["d"]),
            design=obj["design"],
            noise=obj["noise"],
            theta_star=None if obj["theta_star"] is None else np.array(obj["theta_star"]),
            f=obj["f"],
        )


def _draw_noise(noise: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    name = noise["name"]
    if name == "none":
        return np.zeros(n)
    if name == "gaussian":
        return np.sqrt(noise["sigma2"]) * rng.standard_normal(n)
    if name == "gmm":
        # each point comes from the small component with probability p
        small = rng.uniform(size=n) < noise["p"]
        scales = np.where(small, np.sqrt(noise["delta2"]), np.sqrt(noise["sigma2"]))
        return scales * rng.standard_normal(n)
    if name == "uniform":
        w = noise["half_width"]
        return rng.uniform(-w, w, size=n)
    raise ValueError(f"unknown noise spec {noise!r}")


def draw_from_truth(
    truth: GroundTruth,
    n: int,
    rng: np.random.Generator,
    design_rng: np.random.Generator | None = None,
) -> Dataset:
    """Draw a fresh dataset of size n from the generating process.

    ``design_rng`` optionally separates the design draw from the noise/label
    draw so experiment harnesses can freeze the design across repetitions.
    """
    drng = rng if design_rng is None else design_rng
    if truth.design == "vandermonde":
        zeta = drng.uniform(-1.0, 1.0, size=n)
        Z = vandermonde_expand(zeta, truth.d)
        signal = resolve_function(truth.f)(zeta)
    else:
        Z = drng.standard_normal((n, truth.d))
        signal = Z @ truth.theta_star
    if truth.kind == BINARY:
        labels = (rng.uniform(size=n) < sigmoid(signal)).astype(float)
        return Dataset(Z, labels, kind=BINARY)
    return Dataset(Z, signal + _draw_noise(truth.noise, n, rng), kind=REGRESSION)


def gen_linreg(n, d, theta_star, sigma2, rng) -> tuple[Dataset, GroundTruth]:
    """Well-specified regression: standard-normal design, Gaussian noise."""
    if n < 1 or d < 1:
        raise ValueError(f"need n, d >= 1, got ({n}, {d})")
    if sigma2 < 0:
        raise ValueError(f"need sigma2 >= 0, got {sigma2}")
    noise = {"name": "none"} if sigma2 == 0 else {"name": "gaussian", "sigma2": float(sigma2)}
    truth = GroundTruth(REGRESSION, int(d), "normal", noise, theta_star=theta_star)
    return draw_from_truth(truth, int(n), rng), truth


def gen_gaussian_mean(n, theta, rng) -> tuple[Dataset, GroundTruth]:
    """Scalar mean estimation X_i ~ N(theta, 1), encoded with an all-ones design.

    The noise variance is fixed at 1 regardless of input; this is the
    canonical special case (use the polynomial generator with a constant
    function for other variances).
    """
    truth = GroundTruth(
        REGRESSION,
        1,
        "vandermonde",
        {"name": "gaussian", "sigma2": 1.0},
        f={"name": "constant", "value": float(theta)},
    )
    return draw_from_truth(truth, int(n), rng), truth


def gen_polynomial(n, d, f, sigma2_true, rng) -> tuple[Dataset, GroundTruth]:
    """Noisy scalar function on [-1, 1] observed through a power-expanded design."""
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    f_spec = {"name": f} if isinstance(f, str) else dict(f)
    resolve_function(f_spec)  # validate early
    noise = (
        {"name": "none"}
        if sigma2_true == 0
        else {"name": "gaussian", "sigma2": float(sigma2_true)}
    )
    truth = GroundTruth(REGRESSION, int(d), "vandermonde", noise, f=f_spec)
    return draw_from_truth(truth, int(n), rng), truth


def gen_gmm_noise(n, d, theta_star, sigma2, delta2, p, rng) -> tuple[Dataset, GroundTruth]:
    """Regression with two-component Gaussian mixture noise (delta2 << sigma2)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"need 0 <= p <= 1, got {p}")
    if delta2 > sigma2:
        raise ValueError(f"mixture expects delta2 <= sigma2, got ({delta2}, {sigma2})")
    noise = {
        "name": "gmm",
        "sigma2": float(sigma2),
        "delta2": float(delta2),
        "p": float(p),
    }
    truth = GroundTruth(REGRESSION, int(d), "normal", noise, theta_star=theta_star)
    return draw_from_truth(truth, int(n), rng), truth


def gen_uniform_noise(n, d, theta_star, half_width, rng) -> tuple[Dataset, GroundTruth]:
    """Regression with uniform noise on [-half_width, half_width]."""
    if half_width <= 0:
        raise ValueError(f"need half_width > 0, got {half_width}")
    noise = {"name": "uniform", "half_width": float(half_width)}
    truth = GroundTruth(REGRESSION, int(d), "normal", noise, theta_star=theta_star)
    return draw_from_truth(truth, int(n), rng), truth


def gen_logistic(n, d, theta_star, rng) -> tuple[Dataset, GroundTruth]:
    """Binary labels with P(Y=1 | z) = sigmoid(theta*'z), standard-normal design."""
    truth = GroundTruth(BINARY, int(d), "normal", None, theta_star=theta_star)
    return draw_from_truth(truth, int(n), rng), truth


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def sidecar_path(path) -> Path:
    """The JSON sidecar next to a dataset CSV (``data.csv`` -> ``data.json``)."""
    p = Path(path)
    return p.with_suffix(".json") if p.suffix == ".csv" else Path(str(p) + ".json")


def write_dataset(data: Dataset, path, truth: GroundTruth | None = None) -> None:
    """Write the columnar CSV and its JSON sidecar."""
    p = Path(path)
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"z_{j}" for j in range(data.d)] + ["y"])
        for i in range(data.n):
            writer.writerow(
                [repr(float(v)) for v in data.Z[i]] + [repr(float(data.Y[i]))]
            )
    meta = {
        "kind": data.kind,
        "n": data.n,
        "d": data.d,
        "ground_truth": None if truth is None else truth.to_json(),
    }
    with open(sidecar_path(p), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def read_dataset(path) -> tuple[Dataset, GroundTruth | None]:
    """Read a dataset CSV (and its sidecar, when present)."""
    p = Path(path)
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "y":
        raise ValueError(f"{p}: expected a z_0..z_(d-1),y header, got {header!r}")
    d = len(header) - 1
    Z = np.array([[float(v) for v in row[:d]] for row in body])
    Y = np.array([float(row[d]) for row in body])
    kind = REGRESSION
    truth = None
    side = sidecar_path(p)
    if side.exists():
        with open(side) as fh:
            meta = json.load(fh)
        kind = meta.get("kind", REGRESSION)
        if meta.get("ground_truth") is not None:
            truth = GroundTruth.from_json(meta["ground_truth"])
    return Dataset(Z, Y, kind=kind), truth
