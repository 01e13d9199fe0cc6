"""How fast does a form-driven flood fill a 2 MB inbox?

Runs the bundled attack sizes once each, then a small sweep to fit how
kill time scales with the number of launch pads and where the attack
overtakes the time it takes to submit the forms.

    python demos/attack_sweep.py
"""
from formflood.attack_sim import run_attack, sweep
from formflood.model_fit import crossing_point, fit_power_law
from formflood.scenario import ATTACK_SIZES, standard_attack


def main():
    print("single runs (seed 0)")
    for F in ATTACK_SIZES:
        out = run_attack(standard_attack(F), stop_at_kill=True)
        kill = "survived" if out.kill_time is None else f"dead after {out.kill_time:7.1f} min"
        print(f"  F={F:5d}  submitting takes {out.attack_time:6.1f} min  inbox {kill}")

    table = sweep(standard_attack(512), [512, 1024, 2048, 4096], replications=5, workers=4)
    points = [(r.F, r.mean_kill) for r in table.rows]
    law = fit_power_law(points)
    print("\nmean kill time over 5 seeds")
    for F, k in points:
        print(f"  F={F:5d}  {k:9.1f} min")
    print(f"\nkill time ~ F^{law.exponent_or_rate:.2f}")
    print(f"attack outruns form submission past F ~ {crossing_point(law, table.fill_rate):.0f}")


if __name__ == "__main__":
    main()
