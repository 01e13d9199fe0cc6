"""Three mailbox owners under the same flood, each with their own cleaner.

The individual relies on an address book, the store on pseudonyms it gave
to shops, the politician on an allow-list of local ISPs. For each we print
how much attack mail the cleaner removed and how much real mail it kept.

    python demos/defense_personas.py
"""
from formflood.attack_sim import run_attack
from formflood.defense import evaluate_defense
from formflood.scenario import bundled_scenario, load_scenario


def main():
    for persona in ("individual", "store", "politician"):
        sc = load_scenario(bundled_scenario(f"persona-{persona}"))
        out = run_attack(sc.attack, record_traffic=True)
        legit = sc.legit_traffic
        stream = legit.generate(sc.attack.effective_horizon)
        book = legit.book()
        m = evaluate_defense(out, stream, sc.defense_policy, book)
        when = "never" if m.triggered_at is None else f"at {m.triggered_at:.0f} min"
        print(f"{persona:10s} meter fired {when:>12s}  "
              f"removed {m.attack_removed}/{m.attack_total} attack  "
              f"kept {m.legit_total - m.legit_removed}/{m.legit_total} legitimate  "
              f"freed {m.bytes_freed / 1e6:.1f} MB")


if __name__ == "__main__":
    main()
