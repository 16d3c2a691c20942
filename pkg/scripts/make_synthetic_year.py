"""Generate the bundled synthetic fleet and one year of hourly net load.

The fleet is a coal-and-gas heavy stack: zero-emission baseload, about 15 GW of
coal, then combined-cycle gas, gas steam, combustion turbines and oil. Net
load is gross load minus solar and wind. Solar depresses midday net load, so
low-generation hours cluster in the daytime window rather than at night.

    python scripts/make_synthetic_year.py [--out data/synthetic] [--seed 2012]
"""

import argparse
from datetime import datetime
from pathlib import Path

import numpy as np

from gridshift.grid import Fleet, Generator, LoadSeries, write_fleet, write_series

YEAR = 2019  # 365 days -> 8760 hours


def make_fleet(rng) -> Fleet:
    gens = []

    def block(prefix, fuel, n, size, cost, theta):
        sizes = rng.uniform(*size, n).round(-1)
        costs = np.sort(rng.uniform(*cost, n)).round(2)
        thetas = rng.uniform(*theta, n).round(3)
        for i in range(n):
            gens.append(Generator(f"{prefix}{i + 1:02d}", fuel, float(sizes[i]), float(costs[i]), float(thetas[i])))

    block("hydro", "hydro", 2, (200, 300), (1.0, 3.0), (0.0, 0.0))
    block("nuc", "nuclear", 4, (1150, 1350), (7.0, 8.5), (0.0, 0.0))
    block("coal", "coal", 18, (600, 1100), (17.0, 25.0), (0.95, 1.15))
    block("ngcc", "gas", 32, (450, 900), (27.0, 36.0), (0.36, 0.46))
    block("ngst", "gas", 8, (350, 700), (37.0, 45.0), (0.55, 0.65))
    block("ngct", "gas", 20, (100, 300), (48.0, 80.0), (0.60, 0.80))
    block("oil", "other", 2, (150, 250), (110.0, 130.0), (0.80, 0.90))
    return Fleet(tuple(gens))


def ar1(rng, n, phi, sigma):
    x = np.zeros(n)
    eps = rng.normal(0.0, sigma, n)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + eps[i]
    return x


def make_net_load(rng) -> LoadSeries:
    hours = np.arange(8760)
    doy = hours // 24
    hod = hours % 24
    # gross load: summer peak, afternoon peak, lower on weekends
    season = 0.5 * (1 - np.cos(2 * np.pi * (doy - 15) / 365))  # 0 in mid-Jan, 1 in mid-July
    season = season**1.5
    daily = 0.80 + 0.20 * np.exp(-((hod - 17) ** 2) / 18.0) + 0.06 * np.exp(-((hod - 8) ** 2) / 4.0)
    daily -= 0.04 * np.exp(-((hod - 4) ** 2) / 6.0)
    weekday = np.array([datetime(YEAR, 1, 1).weekday()])[0]
    dow = (doy + weekday) % 7
    weekend = np.where(dow >= 5, 0.93, 1.0)
    gross = (31000 + 13000 * season) * daily * weekend
    gross *= 1 + ar1(rng, 8760, 0.97, 0.008)

    # solar: stronger in summer, cloudiness varies day to day
    sun = np.clip(np.sin(np.pi * (hod - 6.5) / 13.0), 0, None) ** 1.3
    clear = np.clip(0.75 + ar1(rng, 365, 0.6, 0.18), 0.15, 1.0)[doy]
    solar = (9500 + 3000 * season) * sun * clear

    # wind: night-heavy diurnal shape with multi-day weather swings
    diurnal = 1.0 + 0.25 * np.cos(2 * np.pi * (hod - 2) / 24)
    weather = np.clip(1.0 + ar1(rng, 8760, 0.985, 0.06), 0.1, 2.2)
    wind = (5200 - 1500 * season) * diurnal * weather

    net = np.clip(gross - solar - wind, 3000, None).round(1)
    return LoadSeries(datetime(YEAR, 1, 1), net)


CONFIG = """\
# synthetic year shipped with the package
fleet_path = fleet.csv
load_path = net_load.csv
n_vehicles = 25000
seed = 7
scenarios = day,night
schemes = direct,emission
delta_mwh = 1.0
backend = dp
day_window = 7-19
threshold_mw = 20000
output_dir = ../../results/synthetic
weekdays_only = true
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "synthetic")
    ap.add_argument("--seed", type=int, default=2012)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    fleet = make_fleet(rng)
    series = make_net_load(rng)
    write_fleet(fleet, args.out / "fleet.csv")
    write_series(series, args.out / "net_load.csv")
    (args.out / "year.conf").write_text(CONFIG)
    v = series.values
    print(f"fleet: {len(fleet)} units, {fleet.total_capacity / 1000:.1f} GW")
    print(f"net load: min {v.min():.0f}  mean {v.mean():.0f}  max {v.max():.0f} MW")


if __name__ == "__main__":
    main()
