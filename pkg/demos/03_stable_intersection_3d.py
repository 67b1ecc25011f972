"""A safety filter can manufacture a *stable* spurious equilibrium.

The deadlock demo's saddle is escapable: almost every start slips around
it.  This 3-D scenario shows the more insidious outcome.  Two
overlapping ellipsoidal obstacles hang between the start and the goal,
and on the intersection of their boundaries -- where two barrier rows
bind at once -- the goal pull and the two constraint pushes balance at
an equilibrium that classifies asymptotically STABLE: a whole
neighborhood of descending trajectories is funneled into it and stays
there, safely stuck above the pass.

The script enumerates every active set, classifies all validated
boundary equilibria (four saddles and the stable trap), corroborates
each verdict with an eigenvalue cross-check of the finite-difference
closed-loop Jacobian, and then integrates the bundled start to watch it
converge to the trap rather than the goal.
"""
import itertools

import numpy as np

from clfcbf import (
    classify,
    find_boundary_equilibria,
    integrate,
    load_bundled_scenario,
    safety_margin,
    spectrum_cross_check,
)


def main():
    scenario = load_bundled_scenario("fig1")
    problem = scenario.problem()
    print(f"scenario: {scenario.name} -- obstacles centered (-1, 0, 3) and "
          f"(1, 0, 3), goal at the origin\n")

    print("validated boundary equilibria over all active sets:")
    print(f"{'A':>8s} {'x_e':>38s} {'verdict':>9s} {'mu_max':>12s}  "
          f"spectrum agrees")
    stable_points = []
    for r in (1, 2):
        for indices in itertools.combinations((1, 2), r):
            for rep in find_boundary_equilibria(
                    problem, list(indices), scenario.search):
                if not rep.validated:
                    continue
                verdict = classify(
                    problem, rep.x_e, rep.lambda_e, list(indices))
                check = spectrum_cross_check(
                    problem, rep.x_e, rep.lambda_e, list(indices), verdict)
                x = rep.x_e
                print(f"{str(set(indices)):>8s} "
                      f"({x[0]: 10.6f}, {x[1]: 10.6f}, {x[2]: 10.6f}) "
                      f"{verdict.verdict:>9s} {verdict.mu_max:12.5f}  "
                      f"{check.agree}")
                if verdict.verdict == "stable":
                    stable_points.append(x)
    (trap,) = stable_points
    top = np.array([0.0, 0.0, 3.0 + np.sqrt(1.0 / 8.0)])
    print(f"\nthe stable one sits on the intersection circle's top; the")
    print(f"closed form (0, 0, 3 + sqrt(1/8)) matches to "
          f"{np.linalg.norm(trap - top):.2e}\n")

    x0 = np.array(scenario.initial_states[0])
    trajectory = integrate(
        problem, x0, dt=scenario.dt, t_final=scenario.t_final,
        target=scenario.target, target_tol=scenario.target_tol)
    dist = np.linalg.norm(trajectory.final_state - trap)
    print(f"simulating the bundled start ({x0[0]:g}, {x0[1]:g}, {x0[2]:g}):")
    print(f"  {trajectory.termination.reason} at "
          f"t = {trajectory.termination.time:.3f}, "
          f"{dist:.1e} from the trap, min margin "
          f"{safety_margin(trajectory).min():+.4f}")
    print(f"  V at the trap is {trajectory.V[-1]:.3f}, not 0: the filter is")
    print(f"  safe but the goal is permanently out of reach from this side.")
    print()
    print("caveat: unstable verdicts are definitive (they come with an")
    print("escape witness); a stable verdict is a curvature test that the")
    print("spectrum cross-check corroborates, which is why the table's")
    print("last column exists.")


if __name__ == "__main__":
    main()
