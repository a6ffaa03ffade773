"""Deterministic synthetic load, PV and price profiles.

Stand-ins for measured household load, PV and spot-market data. Envelopes
(all per step, ``resolution`` hours):

* household load: 0.1-3 kW, mean about 0.36 kW (about 8.7 kWh/day), a
  morning peak around 07-09 h and an evening peak around 18-22 h; weekends
  shift the morning peak later and raise midday use. Reactive load is 0.2 x
  active (power factor about 0.98).
* PV availability: fraction of installed peak power in [0, 0.85]; zero
  between 20:30 and 05:30; daily cloudiness drawn from a sunny/mixed/overcast
  mixture with hourly fluctuations on top. A summer month averages about
  5 full-load hours per day.
* price: 0.015-0.09 currency/kWh; night trough, morning shoulder, midday dip
  that deepens on sunny days, evening peak about 1.8 x the midday level;
  weekends about 20 % cheaper.

Everything is drawn from ``numpy.random.default_rng(seed)`` in a fixed
order, so identical arguments give byte-identical arrays.
"""

from __future__ import annotations

import numpy as np

_LOAD_WEEKDAY = np.array(
    [0.18, 0.15, 0.14, 0.14, 0.15, 0.2, 0.38, 0.62, 0.58, 0.36, 0.3, 0.3,
     0.36, 0.32, 0.28, 0.28, 0.34, 0.5, 0.74, 0.86, 0.8, 0.64, 0.42, 0.26]
)
_LOAD_WEEKEND = np.array(
    [0.22, 0.17, 0.15, 0.14, 0.14, 0.15, 0.2, 0.3, 0.48, 0.56, 0.5, 0.46,
     0.52, 0.44, 0.36, 0.34, 0.38, 0.52, 0.74, 0.84, 0.78, 0.62, 0.44, 0.3]
)
_PRICE_SHAPE = np.array(
    [0.78, 0.72, 0.68, 0.66, 0.68, 0.76, 0.95, 1.18, 1.25, 1.15, 1.05, 1.0,
     0.98, 0.96, 0.98, 1.02, 1.1, 1.25, 1.45, 1.52, 1.4, 1.2, 1.0, 0.88]
)

SUNRISE, SUNSET = 5.5, 20.5


def _hourly(shape, hours):
    """Sample a 24-entry hourly shape at fractional hours (linear interp)."""
    x = np.concatenate([np.arange(24) + 0.5, [24.5]])
    y = np.concatenate([shape, shape[:1]])
    h = np.mod(hours, 24.0)
    return np.interp(np.where(h < 0.5, h + 24.0, h), x, y)


def clear_sky(hours):
    """Clear-sky PV fraction of peak at fractional local hours."""
    h = np.mod(hours, 24.0)
    phase = np.clip((h - SUNRISE) / (SUNSET - SUNRISE), 0.0, 1.0)
    day = (phase > 0.0) & (phase < 1.0)
    return np.where(day, 0.85 * np.sin(np.pi * phase) ** 1.5, 0.0)


def synth_profiles(seed: int = 0, days: int = 31, resolution: float = 1.0, n_households: int = 18, weekday0: int = 0) -> dict:
    """Synthetic series for ``days`` days at ``resolution`` hours per step.

    Returns a dict with ``hours`` (step midpoints, h), ``load_p`` and
    ``load_q`` (N, n_households) in kW/kvar, ``pv`` (N,) as a fraction of
    installed peak, and ``price`` (N,) in currency/kWh.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if resolution <= 0 or (24.0 / resolution) % 1:
        raise ValueError("resolution must divide 24 h")
    rng = np.random.default_rng(seed)
    per_day = int(round(24.0 / resolution))
    N = days * per_day
    hours = (np.arange(N) + 0.5) * resolution
    day = np.arange(N) // per_day
    weekend = ((day + weekday0) % 7) >= 5

    # day-level draws
    regime = rng.choice(3, size=days, p=[0.55, 0.3, 0.15])
    cloud_day = np.array([0.95, 0.7, 0.3])[regime] * rng.uniform(0.9, 1.05, size=days)
    price_level = rng.uniform(0.03, 0.04, size=days)
    hh_scale = rng.uniform(0.75, 1.25, size=n_households)

    # PV
    flicker = np.clip(1.0 - np.abs(rng.normal(0.0, 0.25, size=N)) * (1.0 - cloud_day[day]), 0.05, 1.0)
    pv = np.clip(clear_sky(hours) * cloud_day[day] * flicker, 0.0, 0.85)

    # load
    shape = np.where(weekend, _hourly(_LOAD_WEEKEND, hours), _hourly(_LOAD_WEEKDAY, hours))
    noise = rng.lognormal(mean=-0.045, sigma=0.3, size=(N, n_households))
    load_p = np.clip(shape[:, None] * hh_scale[None, :] * noise, 0.1, 3.0)
    load_q = 0.2 * load_p

    # price: solar output depresses midday prices
    sun = clear_sky(hours) / 0.85 * cloud_day[day]
    price = price_level[day] * _hourly(_PRICE_SHAPE, hours) * (1.0 - 0.25 * sun)
    price *= np.where(weekend, 0.8, 1.0) * rng.normal(1.0, 0.04, size=N)
    price = np.clip(price, 0.015, 0.09)

    return {"hours": hours, "load_p": load_p, "load_q": load_q, "pv": pv, "price": price}
