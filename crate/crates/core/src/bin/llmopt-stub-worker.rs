//! Minimal evaluation worker used by the test suite and for trying out the
//! external-problem path.
//!
//! Scores a string by its length (maximize) and its vowel count (minimize).
//! The first argument picks a behaviour: `ok` (default), `nan`,
//! `nondeterministic`, `bad-id`, `short`, `protocol2`, `slow`, `crash`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use llmopt_core::objective::ObjectiveSpec;
use llmopt_core::worker::{Handshake, Request, Response, WorkerResult, PROTOCOL_VERSION};

fn score(text: &str) -> WorkerResult {
    if text.is_empty() || text.contains('\u{1}') {
        return WorkerResult {
            valid: false,
            objectives: BTreeMap::new(),
            constraints: BTreeMap::new(),
            feedback: Some("empty or undecodable candidate".into()),
        };
    }
    let length = text.chars().count() as f64;
    let vowels = text.chars().filter(|c| "aeiouAEIOU".contains(*c)).count() as f64;
    WorkerResult {
        valid: true,
        objectives: [
            ("length".to_string(), Some(length)),
            ("vowels".to_string(), Some(vowels)),
        ]
        .into(),
        constraints: BTreeMap::new(),
        feedback: Some(format!("{length} characters, {vowels} vowels")),
    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "ok".into());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    let handshake = Handshake {
        protocol: if mode == "protocol2" {
            2
        } else {
            PROTOCOL_VERSION
        },
        objectives: vec![
            ObjectiveSpec::maximize("length"),
            ObjectiveSpec::minimize("vowels"),
        ],
        constraints: vec![],
    };
    writeln!(out, "{}", serde_json::to_string(&handshake).unwrap()).unwrap();
    out.flush().unwrap();

    let mut served = 0u64;
    for line in std::io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("bad request: {e}");
                std::process::exit(1);
            }
        };
        if mode == "crash" {
            std::process::exit(3);
        }
        if mode == "slow" {
            std::thread::sleep(std::time::Duration::from_secs(3));
        }
        served += 1;
        let mut results: Vec<WorkerResult> = req.candidates.iter().map(|c| score(c)).collect();
        if mode == "nondeterministic" {
            for r in &mut results {
                if let Some(Some(v)) = r.objectives.get_mut("length") {
                    *v += served as f64;
                }
            }
        }
        if mode == "short" {
            results.pop();
        }
        let id = if mode == "bad-id" {
            req.id + 1000
        } else {
            req.id
        };
        let mut text = serde_json::to_string(&Response { id, results }).unwrap();
        if mode == "nan" {
            // serde_json writes non-finite floats as null; emit the raw token instead.
            text = text.replace("\"length\":", "\"length\":NaN,\"_len\":");
        }
        writeln!(out, "{text}").unwrap();
        out.flush().unwrap();
    }
}
