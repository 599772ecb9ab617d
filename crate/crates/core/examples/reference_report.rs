//! Prints every model output of the reference individual next to its healthy
//! range. Handy when retuning the reference parameter file.

use cardioloop::model::reference_parameters;
use cardioloop::observables::compute_outputs;
use cardioloop::solver::{integrate, SolverSettings};
use cardioloop::stats::{range_check_alias, HealthyRanges};

fn main() {
    let params = reference_parameters();
    let settings = SolverSettings::default();
    let traj = integrate(&params, &params.initial_state(), &settings).unwrap();
    let outputs = compute_outputs(&traj, &params).unwrap();
    let ranges = HealthyRanges::builtin();

    println!(
        "converged in {} beats (residual {:.2e}, {} accepted steps)",
        traj.beats_to_converge, traj.steady_state_residual, traj.steps_accepted
    );
    println!("{:<16} {:>10}  {:>18}  ok?", "quantity", "value", "healthy range");
    let bsa = params.body_surface_area;
    for (name, value) in outputs.iter() {
        let (alias, checked) = range_check_alias(name, value, bsa);
        match ranges.get(alias) {
            Some(r) => {
                let lo = r.lower.map_or("-".into(), |v| format!("{v}"));
                let hi = r.upper.map_or("-".into(), |v| format!("{v}"));
                let ok = if r.contains(checked) { "ok" } else { "  <-- OUT" };
                println!("{alias:<16} {checked:>10.3}  {:>18}  {ok}", format!("[{lo}, {hi}]"));
            }
            None => println!("{alias:<16} {checked:>10.3}  {:>18}", "(no range)"),
        }
    }
}
