use cns_core::data::load_label_file;
use cns_core::eval::evaluate;

use crate::{CliError, EvalArgs};

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let pred = load_label_file(&args.pred)?;
    let truth = load_label_file(&args.truth)?;
    let report = evaluate(&truth, &pred)?;
    println!("{:<10} {:>8}", "metric", "x100");
    println!("{:<10} {:>8.2}", "accuracy", 100.0 * report.accuracy);
    println!("{:<10} {:>8.2}", "ARI", 100.0 * report.ari);
    println!("{:<10} {:>8.2}", "AMI", 100.0 * report.ami);
    println!("{}", serde_json::to_string(&report).expect("metric report serialises"));
    Ok(())
}
