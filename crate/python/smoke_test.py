"""Smoke test for the so3ndi_py extension.

Build and install first:

    pip install --no-build-isolation ./crates/py
"""

import math
import pathlib

import so3ndi_py as s

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol=1e-12):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    v = [0.3, -0.2, 0.5]
    assert close(s.vee(s.hat(v)), v)
    r = s.exp_so3(v)
    assert close(s.log_so3(r), v, 1e-12)

    r_d = s.random_rotation(1)
    assert s.config_error(r_d, r_d) == 0.0
    half_turn = s.exp_so3([math.pi, 0.0, 0.0])
    identity = s.exp_so3([0.0, 0.0, 0.0])
    assert abs(s.config_error(identity, half_turn) - 2.0) < 1e-12

    pid = s.make_lead_lag(-27.75, ki=-1.85, kd=-5.55, eps=0.001, tau_f=10.0)
    assert pid.state_dim == 2, pid
    (g,), = pid.frequency_response(0.0)
    print("lead-lag DC gain", g)

    cfg = s.Scenario.load(ROOT / "scenarios" / "regulation.toml")
    report = cfg.certify()
    print("certify:", {k: report[k] for k in ("attitude_lmi", "cascade_lmi", "bandwidth_ratios")})
    assert report["all_feasible"]

    short = s.Scenario('name = "smoke"\n[maneuver]\nkind = "regulation"\ninitial_angle = 1.0\n[sim]\nduration = 2.0\n')
    summary, cols = short.run()
    print("run:", summary["name"], "final psi", summary["final_psi"])
    assert not summary["unstable"]
    assert summary["final_psi"] < 1e-6
    assert len(cols["t"]) == len(cols["psi"])

    sim = s.Simulation(short)
    sim.set_initial(s.exp_so3([0.0, 2.0, 0.0]))
    first = sim.step()
    for _ in range(999):
        last = sim.step()
    assert last["psi"] < first["psi"]
    print("stepped to t =", round(sim.time, 6), "psi", last["psi"])
    print("ok")


if __name__ == "__main__":
    main()
