//! Drives the command-line front end in-process: generate, certify, solve,
//! verify. Equivalent to running the `leakybias` binary with these arguments.

use leakybias::cli::run_with_args;

fn main() {
    let dir = std::env::temp_dir().join("leakybias_cli_example");
    let _ = std::fs::create_dir_all(&dir);
    let data = dir.join("data.txt");
    let kkt = dir.join("kkt.net");
    let (data, kkt) = (data.to_str().unwrap(), kkt.to_str().unwrap());
    let steps: [&[&str]; 4] = [
        &["generate", "--kind", "near-orthogonal", "--n", "8", "--d", "256", "--out", data, "--force"],
        &["certify", data, "--gamma", "0.5"],
        &["solve-qp", data, "--m1", "4", "--m2", "4", "--out", kkt, "--force"],
        &["verify", data, "--m1", "4", "--m2", "4", "--network", kkt, "--probes", "1000"],
    ];
    for args in steps {
        println!("$ leakybias {}", args.join(" "));
        let code = run_with_args(std::iter::once("leakybias").chain(args.iter().copied()).map(std::ffi::OsString::from));
        println!("(exit {code})");
    }
}
