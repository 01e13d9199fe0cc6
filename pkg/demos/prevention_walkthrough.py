"""Walk one signup through the mail-back validation protocol.

An honest user claims an address and mails the nonce back from their own
provider. An attacker claiming the same address from elsewhere gets
nothing: the site sends no mail until the address proves itself.

    python demos/prevention_walkthrough.py
"""
from formflood.prevention import MailAccount, ValidationSite, default_registry, run_adversary_suite


def main():
    reg = default_registry()
    site = ValidationSite("lists@site.example", reg, seed=1)

    ch = site.submit(None, "alice@isp.example", 0.0)
    print("challenge page offers:", ch.mailto(site.site_address))
    reply = MailAccount("alice@isp.example", reg).send(ch.nonce, 2.0, challenge_id=ch.challenge_id)
    print("alice mails back ->", site.receive(reply).verdict)

    forged = site.submit(None, "victim@isp.example", 3.0)
    spoof = MailAccount("mallory@attacker-isp.example", reg).send(
        forged.nonce, 4.0, claimed_sender="victim@isp.example", challenge_id=forged.challenge_id)
    print("forged reply for victim ->", site.receive(spoof).verdict)
    print("mail sent by the site:", [(m.to, m.kind) for m in site.outbox])
    print()
    print(site.trace_text(), end="")

    report = run_adversary_suite(reg, trials=1000, seed=0)
    print(f"\n1000 rounds: false accepts {report.false_accepts}, "
          f"honest rejected {report.false_rejects}, "
          f"insiders accepted {report.residual_risk_accepts} (outside what the check can see)")


if __name__ == "__main__":
    main()
