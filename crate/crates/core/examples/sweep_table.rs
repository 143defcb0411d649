use camsim_core::experiment::{calibrated_profiles, sweep, Experiment};
use camsim_core::metrics::{combined_csv, speedup_table};

fn main() {
    let start = std::time::Instant::now();
    let tables = sweep(&Experiment::default_sweep(), &calibrated_profiles()).unwrap();
    println!("{}", combined_csv(&tables).unwrap());
    for (m, t) in &tables {
        println!("{m}\n{}", speedup_table(t).unwrap().to_csv().unwrap());
    }
    eprintln!("{:?}", start.elapsed());
}
