//! Regenerates a bundled rule book: samples labeled transactions from a
//! scenario's surrogate classifier under a fixed truth, writes the
//! dataset, and mines the supervised rule book.
//!
//! Usage:
//!   cargo run -p ccsim-core --example make_rulebook -- \
//!     <scenario.toml> <truth-code> <n> <seed> <dataset-out> <rulebook-out>

use std::process::ExitCode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ccsim_core::evidence::Cause;
use ccsim_core::rules::{mine_supervised, transaction_from_vector, Dataset, MiningConfig};
use ccsim_core::trafficsim::{classify_surrogate, load_scenario};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (main_args, thresholds) = args.split_at(args.len().min(6));
    let [scenario, truth, n, seed, dataset_out, rulebook_out] = main_args else {
        eprintln!(
            "usage: make_rulebook <scenario.toml> <truth-code> <n> <seed> <dataset-out> <rulebook-out> [minsup mincon]"
        );
        return ExitCode::from(2);
    };
    let minsup: f64 = thresholds
        .first()
        .map(|s| s.parse().expect("minsup"))
        .unwrap_or(0.25);
    let mincon: f64 = thresholds
        .get(1)
        .map(|s| s.parse().expect("mincon"))
        .unwrap_or(0.8);
    let cfg = match load_scenario(scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let truth: Cause = match truth.parse() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let n: usize = n.parse().expect("n must be an integer");
    let seed: u64 = seed.parse().expect("seed must be an integer");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = Dataset::default();
    for _ in 0..n {
        let v = classify_surrogate(Some(truth), &cfg.classifier, &mut rng);
        dataset.push(transaction_from_vector(&v, Some(truth)));
    }
    let mut file = std::fs::File::create(dataset_out).expect("create dataset file");
    dataset.write(&mut file).expect("write dataset");

    let cfg_mine = MiningConfig::new(minsup, mincon).expect("thresholds");
    let book = mine_supervised(&dataset, &cfg_mine).expect("mine");
    let mut file = std::fs::File::create(rulebook_out).expect("create rulebook file");
    book.write_csv(&mut file).expect("write rulebook");
    eprintln!(
        "wrote {} transactions and {} rules for truth {}",
        dataset.len(),
        book.rules().len(),
        truth
    );
    ExitCode::SUCCESS
}
