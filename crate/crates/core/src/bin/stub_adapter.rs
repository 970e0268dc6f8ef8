//! Minimal difficulty adapter speaking the line-delimited JSON protocol.
//!
//! Usage: `stub-adapter [--fixed X | --normal MEAN SD | --by-topic] [--seed S]
//!         [--malformed] [--sleep-ms N] [--reverse N] [--exit-after N]`
//!
//! `--by-topic` answers with the topic name parsed as a number.
//! `--reverse N` buffers N requests and answers them in reverse order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{BufRead, Write};
use std::time::Duration;

enum Source {
    Fixed(f64),
    Normal(Normal<f64>),
    ByTopic,
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut source = Source::Fixed(42.0);
    let mut seed = 0u64;
    let mut malformed = false;
    let mut sleep = Duration::ZERO;
    let mut reverse = 1usize;
    let mut exit_after = usize::MAX;
    let num = |i: usize| -> f64 {
        args.get(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or_else(|| panic!("expected a number after {}", args[i - 1]))
    };
    let mut i = 0;
    while i < args.len() {
        match args[i].as_str() {
            "--fixed" => {
                source = Source::Fixed(num(i + 1));
                i += 1;
            }
            "--normal" => {
                source = Source::Normal(Normal::new(num(i + 1), num(i + 2)).expect("valid normal"));
                i += 2;
            }
            "--by-topic" => source = Source::ByTopic,
            "--seed" => {
                seed = num(i + 1) as u64;
                i += 1;
            }
            "--malformed" => malformed = true,
            "--sleep-ms" => {
                sleep = Duration::from_millis(num(i + 1) as u64);
                i += 1;
            }
            "--reverse" => {
                reverse = (num(i + 1) as usize).max(1);
                i += 1;
            }
            "--exit-after" => {
                exit_after = num(i + 1) as usize;
                i += 1;
            }
            other => panic!("unknown argument {other}"),
        }
        i += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    let mut pending: Vec<(u64, String)> = Vec::new();
    let mut answered = 0usize;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let Ok(req) = serde_json::from_str::<serde_json::Value>(&line) else {
            continue;
        };
        let topic = req["topic"].as_str().unwrap_or_default().to_string();
        pending.push((req["id"].as_u64().unwrap_or(0), topic));
        if pending.len() < reverse {
            continue;
        }
        while let Some((id, topic)) = pending.pop() {
            if answered >= exit_after {
                return;
            }
            std::thread::sleep(sleep);
            let d = match &source {
                Source::Fixed(x) => *x,
                Source::Normal(n) => n.sample(&mut rng),
                Source::ByTopic => topic.parse().unwrap_or(f64::NAN),
            };
            if malformed {
                writeln!(stdout, "this is not json").ok();
            } else {
                writeln!(stdout, "{}", serde_json::json!({ "id": id, "difficulty": d })).ok();
            }
            stdout.flush().ok();
            answered += 1;
        }
    }
}
