/// Cheap parameters for every subcommand.
pub fn quick(name: &str) -> Vec<&'static str> {
    match name {
        "exp-moment" => vec!["--drift", "sin", "--trials", "64", "--level", "8"],
        "tail-fit" => vec!["--trials", "400", "--level", "8", "--lambda-min", "0", "--lambda-max", "2"],
        "covariation" => vec!["--trials", "8", "--level", "10"],
        "zvonkin" => vec!["--drift", "sin", "--nx", "64", "--nt", "64", "--export", "true"],
        "flow-holder" => vec!["--noises", "2", "--noise-level", "8", "--dt-level", "8", "--time-level", "2", "--export", "true"],
        "net-count" => vec!["--probes", "50", "--codes", "true"],
        "chain" => vec!["--trials", "20", "--l-count", "2", "--pairs", "16"],
        "occupation" => vec!["--trials", "100", "--level", "8"],
        "uniqueness" => vec![
            "--oracle", "direct", "--noises", "2", "--m-min", "2", "--m-max", "4", "--noise-level", "10",
            "--oracle-level", "10", "--export", "true",
        ],
        "continuity" => vec!["--trials", "10", "--level", "8", "--widths", "0.05"],
        other => panic!("no quick parameters for {other}"),
    }
}
