"""Grid search for a launch-pad mix that matches a target long-term rate.

The quantity matched is the fitted long-term arrival rate per form,
``a_F / F``, from growth-model fits on the message channel for a few attack
sizes.  The rate is a property of the arrival process, so each probe watches
an uncapped inbox for a fixed window (4 days by default) instead of stopping
at the kill; a box that dies minutes after the attack has no long-term phase
to fit.  Fits are made on uniform snapshots of the inbox, the way a
periodically polled mailbox would be observed.

The grid (at most 200 points, searched in this order, default point first):

* newsletter interval: 1d, 12h, 18h, 1.5d, 2d, 3d
* reseller spam interval: 14d, 3d, 5d, 7d, 10d
* (snowball probability, senders spawned per sale):
  (0.3, 2), (0.2, 2), (0.4, 2), (0.3, 1), (0.3, 3), (0.2, 3)

6 x 5 x 6 = 180 points.  The search stops at the first point whose rate is
within tolerance of the target for every probed attack size.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attack_sim import DAY, HOUR, AttackConfig, calibrated_mix, replication_seed, run_attack
from .model_fit import fit_tanh_model

NEWSLETTER_INTERVALS = (DAY, 12 * HOUR, 18 * HOUR, 1.5 * DAY, 2 * DAY, 3 * DAY)
SPAM_INTERVALS = (14 * DAY, 3 * DAY, 5 * DAY, 7 * DAY, 10 * DAY)
SNOWBALL_SETTINGS = ((0.3, 2), (0.2, 2), (0.4, 2), (0.3, 1), (0.3, 3), (0.2, 3))

PROBE_FORMS = (512, 1024, 2048)
RATE_WINDOW = 4 * DAY
UNITS = {"min": 1.0, "hour": HOUR, "day": DAY}


@dataclass(frozen=True)
class GridPoint:
    newsletter_interval: float
    spam_interval: float
    snowball_prob: float
    spawn: int

    def mix(self):
        return calibrated_mix(self.newsletter_interval, self.spam_interval, self.snowball_prob, self.spawn)

    def to_dict(self) -> dict:
        return {"newsletter_interval": self.newsletter_interval, "spam_interval": self.spam_interval,
                "snowball_prob": self.snowball_prob, "spawn": self.spawn}


def grid() -> list[GridPoint]:
    return [GridPoint(n, s, p, k) for n, s, (p, k)
            in itertools.product(NEWSLETTER_INTERVALS, SPAM_INTERVALS, SNOWBALL_SETTINGS)]


@dataclass
class Probe:
    point: GridPoint
    rates: dict[int, float]  # F -> mean fitted a_F / F, per minute
    target: float            # per minute

    @property
    def worst_error(self) -> float:
        return max(abs(r - self.target) / self.target for r in self.rates.values())


@dataclass
class CalibrationResult:
    success: bool
    best: Probe
    probes: list[Probe] = field(default_factory=list)
    config: AttackConfig | None = None

    def report(self, unit: str = "day") -> str:
        scale = UNITS[unit]
        lines = [f"{'calibrated' if self.success else 'no grid point within tolerance'} "
                 f"after {len(self.probes)} of {len(grid())} points",
                 f"best: {self.best.point.to_dict()}",
                 f"target {self.best.target * scale:.4g} msgs/{unit}/form, worst error {self.best.worst_error:.1%}"]
        for F, r in sorted(self.best.rates.items()):
            lines.append(f"  F={F}: a_F/F = {r * scale:.4g} msgs/{unit}")
        return "\n".join(lines)


def fitted_rate_per_form(config: AttackConfig, replications: int, window: float = RATE_WINDOW) -> float:
    """Mean over seeds of the fitted long-term message rate divided by F (per minute)."""
    observed = config.replace(quota=math.inf, sms_mode=False, horizon=window)
    vals = []
    for r in range(replications):
        out = run_attack(observed.replace(seed=replication_seed(config.seed, r)))
        if len(out.series) < 4:
            vals.append(0.0)
            continue
        fit = fit_tanh_model(out.series.snapshots(), "messages")
        vals.append(fit.a / config.num_forms if fit.converged else math.nan)
    return float(np.nanmean(vals)) if not np.all(np.isnan(vals)) else math.nan


def probe(base: AttackConfig, point: GridPoint, target: float, F_values: Sequence[int] = PROBE_FORMS,
          replications: int = 10, window: float = RATE_WINDOW) -> Probe:
    config = base.replace(behavior_mix=point.mix())
    rates = {int(F): fitted_rate_per_form(config.replace(num_forms=int(F)), replications, window)
             for F in F_values}
    return Probe(point, rates, target)


def calibrate(base: AttackConfig, target: float, tolerance: float, unit: str = "day",
              F_values: Sequence[int] = PROBE_FORMS, replications: int = 10,
              points: Sequence[GridPoint] | None = None, window: float = RATE_WINDOW) -> CalibrationResult:
    """Search the grid for a mix whose ``a_F / F`` is within ``tolerance`` of ``target``.

    ``target`` is in messages per ``unit`` per form.  On success the returned
    config carries the winning mix; otherwise ``best`` is the closest point.
    """
    if target <= 0:
        raise ValueError("target must be positive")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    if unit not in UNITS:
        raise ValueError(f"unit must be one of {sorted(UNITS)}")
    target_per_min = target / UNITS[unit]
    probes = []
    best = None
    for point in (grid() if points is None else points):
        p = probe(base, point, target_per_min, F_values, replications, window)
        probes.append(p)
        if best is None or p.worst_error < best.worst_error:
            best = p
        if p.worst_error <= tolerance:
            return CalibrationResult(True, p, probes, base.replace(behavior_mix=point.mix()))
    return CalibrationResult(False, best, probes, None)


def refine_forms_to_kill(base: AttackConfig, quota: float, deadline: float, F_values: Sequence[int],
                         replications: int = 20, rounds: int = 4, spread: float = 0.08):
    """:func:`forms_to_kill` on a sweep that is densified around its own answer.

    Kill time falls off a cliff once the initial burst alone fills the box,
    so a coarse table interpolates poorly there.  Each round adds rows at
    ``F * (1 +- spread)`` around the current estimate and halves ``spread``.
    Returns the final estimate and the sweep table it came from.
    """
    from .attack_sim import sweep
    from .model_fit import forms_to_kill

    base = base.replace(quota=quota)
    Fs = sorted({int(F) for F in F_values})
    table = sweep(base, Fs, replications, channel="messages" if base.sms_mode else "bytes")
    result = forms_to_kill(quota, deadline, table)
    for _ in range(rounds):
        extra = sorted({max(1, int(round(result.forms * (1 + s * spread)))) for s in (-1, 0, 1)} - set(Fs))
        if not extra:
            break
        Fs = sorted(set(Fs) | set(extra))
        more = sweep(base, extra, replications, channel=table.channel)
        table.rows = sorted(table.rows + more.rows, key=lambda r: r.F)
        result = forms_to_kill(quota, deadline, table)
        spread /= 2
    return result, table
