//! Quick sweep of the shunt resistance to locate the 70% shunt-fraction bound.
use cardioloop::model::reference_parameters;
use cardioloop::observables::{compute_outputs, OutputName};
use cardioloop::solver::{integrate, SolverSettings};

fn main() {
    let settings = SolverSettings::default();
    for r_sh in [3.25, 1.6, 0.8, 0.4, 0.2, 0.1, 0.05, 0.04, 0.035, 0.03] {
        let mut p = reference_parameters();
        p.shunt_resistance = r_sh;
        let traj = integrate(&p, &p.initial_state(), &settings).unwrap();
        let out = compute_outputs(&traj, &p).unwrap();
        println!(
            "R_SH {:>6.3}  shunt {:>6.2}%  CI {:.2}  beats {}",
            r_sh,
            out.get(OutputName::ShuntFraction),
            out.get(OutputName::Ci),
            traj.beats_to_converge
        );
    }
}
