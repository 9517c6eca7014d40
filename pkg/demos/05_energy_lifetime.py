"""Duty-cycle energy accounting: per-wake costs, the daily-energy table for
both detectors and both radio policies, battery lifetimes, and a
discrete-event simulation against a moth-arrival trace.
"""

import numpy as np

from trapnode.power import (Battery, DutyCycleConfig, daily_energy,
                            gap9_cnn_energy, gap9_viola_energy, lifetime,
                            simulate, wake_cycle_energy)

vj = gap9_viola_energy()
cnn = gap9_cnn_energy()
battery = Battery()  # 1000 mAh at 3.7 V
print(f"battery: {battery.energy_j:,.0f} J usable\n")

print("per-wake costs (mJ):")
print(f"  Viola-Jones + 17-byte counter: {wake_cycle_energy(vj, 17):.2f}")
print(f"  CNN (incl. weight-load) + counter: {wake_cycle_energy(cnn, 17):.2f}")
print(f"  one 12.7 kB compressed image: {wake_cycle_energy(gap9_viola_energy(), 12_700) - wake_cycle_energy(vj, 0):.0f}\n")

print(f"{'detector':<12} {'period':>7} {'policy':>10} {'J/day':>8} {'lifetime':>9}")
for name, pe in (("Viola-Jones", vj), ("CNN", cnn)):
    for period, plabel in ((30.0, "30 s"), (900.0, "15 min")):
        for policy, polabel in (("counters_every_wake", "counters"),
                                ("image_per_detection", "images")):
            cfg = DutyCycleConfig(wake_period_s=period, payload_policy=policy)
            daily = daily_energy(pe, cfg).daily_j
            days = lifetime(battery, daily).days
            print(f"{name:<12} {plabel:>7} {polabel:>10} {daily:>8.1f} {days:>7d} d")

print("\nledger for the headline configuration (counters every 30 s, V-J):")
ledger = daily_energy(vj, DutyCycleConfig(wake_period_s=30.0))
for phase in ("compute", "radio", "camera", "sleep", "overhead"):
    print(f"  {phase:<9} {getattr(ledger, phase + '_j'):>8.3f} J/day")
print(f"  total     {ledger.daily_j:>8.3f} J/day "
      f"-> {lifetime(battery, ledger.daily_j).days} days\n")

print("discrete-event simulation: 33 moths/day, image-per-detection policy")
rng = np.random.default_rng(0)
days = 40
arrivals = np.sort(rng.uniform(0, days * 86_400, size=33 * days)).tolist()
cfg = DutyCycleConfig(wake_period_s=900.0, payload_policy="image_per_detection")
result = simulate(cnn, cfg, battery, arrivals, horizon_days=days)
print(f"  simulated {result.days_simulated:.1f} days, "
      f"{len(result.timeline)} wakes, total {result.total_j:,.1f} J")
if result.battery_exhausted_at_s is not None:
    print(f"  battery exhausted on day "
          f"{result.battery_exhausted_at_s / 86_400:.1f} "
          f"(closed form: {battery.energy_j / daily_energy(cnn, cfg).daily_j:.1f})")
