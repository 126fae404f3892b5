"""Turning a solved motor trace into a physical spring characteristic.

A design run yields samples of elongation and elastic torque along the load
cycle.  This module collapses them into a single-valued, strictly increasing
torque-elongation profile and wraps it in a monotone interpolant that a
mechanism designer can evaluate anywhere.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = ["SpringProfileError", "SpringProfile", "build_profile",
           "export_profile", "import_profile"]

MERGE_TOL = 1e-6


class SpringProfileError(ValueError):
    """Sampled characteristic cannot form a valid spring."""


@dataclass
class SpringProfile:
    """Monotone torque-elongation characteristic tau(delta).

    Stores the cleaned knot samples and a shape-preserving cubic (PCHIP)
    interpolant between them.  Outside the sampled range the profile
    extrapolates linearly at the boundary tangent stiffness.
    """

    delta: np.ndarray
    tau: np.ndarray
    label: str = ""
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)
    _dinterp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        if self.delta.ndim != 1 or self.delta.shape != self.tau.shape:
            raise SpringProfileError("delta and tau must be matching 1-d arrays")
        if len(self.delta) < 2:
            raise SpringProfileError("need at least two knots")
        if not np.all(np.diff(self.delta) > 0):
            raise SpringProfileError("elongation knots must be strictly increasing")
        if not np.all(np.diff(self.tau) > 0):
            raise SpringProfileError(
                "torque must be strictly increasing with elongation")
        for a in (self.delta, self.tau):
            a.setflags(write=False)
        self._interp = PchipInterpolator(self.delta, self.tau)
        self._dinterp = self._interp.derivative()

    @property
    def support(self):
        return float(self.delta[0]), float(self.delta[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        lo, hi = self.support
        out = self._interp(np.clip(x, lo, hi))
        below = x < lo
        above = x > hi
        if below.any() or above.any():
            warnings.warn("evaluating spring profile outside sampled range; "
                          "extrapolating at boundary stiffness", RuntimeWarning,
                          stacklevel=2)
            k_lo = float(self._dinterp(lo))
            k_hi = float(self._dinterp(hi))
            out = np.where(below, self.tau[0] + k_lo * (x - lo), out)
            out = np.where(above, self.tau[-1] + k_hi * (x - hi), out)
        return float(out[0]) if scalar else out

    def stiffness(self, x):
        """Tangent stiffness d(tau)/d(delta), constant outside the support."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        lo, hi = self.support
        out = self._dinterp(np.clip(x, lo, hi))
        return float(out[0]) if scalar else out


def build_profile(delta, tau, label="", merge_tol=MERGE_TOL) -> SpringProfile:
    """Clean raw (delta, tau) samples into a profile.

    Sorts by elongation, merges clusters of knots closer than ``merge_tol``
    (averaging both coordinates), and rejects any remaining non-monotone
    torque, which would mean the samples do not describe a passive spring.
    """
    delta = np.asarray(delta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if delta.shape != tau.shape or delta.ndim != 1:
        raise SpringProfileError("delta and tau must be matching 1-d arrays")
    if len(delta) < 2:
        raise SpringProfileError("need at least two samples")
    order = np.argsort(delta, kind="stable")
    delta = delta[order]
    tau = tau[order]

    # cluster merge: start a new knot whenever the gap exceeds merge_tol
    breaks = np.nonzero(np.diff(delta) > merge_tol)[0] + 1
    groups = np.split(np.arange(len(delta)), breaks)
    d_out = np.array([delta[g].mean() for g in groups])
    t_out = np.array([tau[g].mean() for g in groups])
    if len(d_out) < 2:
        raise SpringProfileError("all samples merged into a single knot")
    if not np.all(np.diff(t_out) > 0):
        i = int(np.argmin(np.diff(t_out)))
        raise SpringProfileError(
            "torque is not strictly increasing after merging "
            f"(first violation between delta={d_out[i]:.6g} and "
            f"delta={d_out[i + 1]:.6g})")
    return SpringProfile(delta=d_out, tau=t_out, label=label)


def export_profile(profile: SpringProfile, path, comment_lines=()):
    """Write the knots to CSV with '#' comment headers.

    Floats are written with repr so a subsequent import_profile reproduces
    the knots bit-exactly.
    """
    with open(path, "w", newline="") as fh:
        if profile.label:
            fh.write(f"# label: {profile.label}\n")
        for line in comment_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["delta", "tau"])
        for d, t in zip(profile.delta, profile.tau):
            writer.writerow([repr(float(d)), repr(float(t))])


def import_profile(path) -> SpringProfile:
    """Read a profile written by export_profile."""
    label = ""
    rows = []
    with open(path, newline="") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("label:"):
                    label = body[len("label:"):].strip()
                continue
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["delta", "tau"]:
        raise SpringProfileError(f"{path}: expected 'delta,tau' header")
    data = [(float(a), float(b)) for a, b in reader]
    if not data:
        raise SpringProfileError(f"{path}: no knot rows")
    d, t = map(np.array, zip(*data))
    return SpringProfile(delta=d, tau=t, label=label)
