//! The command-line workflow driven from code: generate a corpus, bill it and
//! sweep the overhead model, all under one output directory.

use smartbill::billing::TariffMode;
use smartbill::pipeline::{run, BenchConfig, Command, CorpusConfig, RunConfig};

fn main() {
    let out = std::env::temp_dir().join("smartbill-pipeline-example");
    let cfg = RunConfig {
        out: out.clone(),
        mode: TariffMode::Dynamic,
        corpus: CorpusConfig { n_meters: 20, days: 3, ..CorpusConfig::default() },
        bench: BenchConfig { n_clients: vec![2], n_intervals: vec![48], n_parties: vec![3], ..BenchConfig::default() },
        ..RunConfig::default()
    };
    for command in [Command::GenData, Command::Bill, Command::Bench] {
        match run(command, &cfg) {
            Ok(()) => println!("{} ok", command.as_str()),
            Err(e) => {
                eprintln!("{}: {e}", command.as_str());
                std::process::exit(e.exit_code());
            }
        }
    }
    let bills = std::fs::read_to_string(out.join("bills.csv")).unwrap();
    println!("{}", bills.lines().take(4).collect::<Vec<_>>().join("\n"));
    println!("outputs in {}", out.display());
}
