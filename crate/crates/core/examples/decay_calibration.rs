//! Prints the decay-fit slope over the default window `[t/20, t/2]` for a
//! range of final times, for the calibration of the acceptance runs.
//!
//! Usage: `cargo run --release --example decay_calibration -- wave-heat 15 55`

use polystab::interconnect::{build_model, ModelKind, ModelSpec};
use polystab::spectral::{decay_rate_fit, default_decay_window, linear_grid};
use polystab::timestep::{default_initial_data, simulate};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let usage = "usage: decay_calibration <wave-heat|acoustic> <t_from> <t_to> [cells]";
    let kind = args
        .first()
        .and_then(|s| ModelKind::from_name(s))
        .expect(usage);
    let from: f64 = args.get(1).and_then(|s| s.parse().ok()).expect(usage);
    let to: f64 = args.get(2).and_then(|s| s.parse().ok()).expect(usage);
    let cells: usize = args.get(3).map_or(400, |s| s.parse().expect(usage));

    let spec = ModelSpec::unit(kind, cells);
    let system = build_model(&spec).expect("model builds");
    let data = default_initial_data(&spec, "default").expect("default data");
    let dt = spec.wave_h() / 4.0;
    let trace = simulate(&system, &data.state, dt, (to / dt).round() as usize, 0).expect("run");
    println!("t_final,slope");
    for t_final in linear_grid(from, to, 41).expect("grid") {
        let fit = decay_rate_fit(&trace, default_decay_window(t_final)).expect("fit");
        println!("{t_final},{}", fit.alpha);
    }
}
