use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

/// Drives the server through a check-sat/get-value round trip, including an
/// echo marker, the way the prover's solver client does.
#[test]
fn answers_a_scripted_session() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_z3-stdio"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("spawn z3-stdio");
    let mut stdin = child.stdin.take().unwrap();
    let stdout = child.stdout.take().unwrap();
    let mut lines = BufReader::new(stdout).lines();

    let script = "(set-logic QF_NIA)\n\
                  (declare-const x Int)\n\
                  (assert (> x 41))\n\
                  (assert (< x 43))\n\
                  (check-sat)\n\
                  (get-value (x))\n\
                  (echo \"done\")\n";
    stdin.write_all(script.as_bytes()).unwrap();
    stdin.flush().unwrap();

    let mut seen = Vec::new();
    for line in &mut lines {
        let line = line.unwrap();
        let stop = line == "done";
        seen.push(line);
        if stop {
            break;
        }
    }
    assert!(
        seen.iter().any(|l| l == "sat"),
        "expected sat, got {seen:?}"
    );
    assert!(
        seen.iter().any(|l| l.contains("42")),
        "expected a model with 42, got {seen:?}"
    );

    stdin.write_all(b"(exit)\n").unwrap();
    drop(stdin);
    let status = child.wait().unwrap();
    assert!(status.success());
}

#[test]
fn survives_errors_and_push_pop() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_z3-stdio"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .expect("spawn z3-stdio");
    let mut stdin = child.stdin.take().unwrap();
    let stdout = child.stdout.take().unwrap();
    let mut lines = BufReader::new(stdout).lines();

    let script = "(declare-const y Int)\n\
                  (assert (misparsed\n\
                  ))\n\
                  (push 1)\n\
                  (assert (= y 1))\n\
                  (assert (= y 2))\n\
                  (check-sat)\n\
                  (pop 1)\n\
                  (assert (= y 7))\n\
                  (check-sat)\n\
                  (echo \"end\")\n";
    stdin.write_all(script.as_bytes()).unwrap();
    stdin.flush().unwrap();

    let mut seen = Vec::new();
    for line in &mut lines {
        let line = line.unwrap();
        let stop = line == "end";
        seen.push(line);
        if stop {
            break;
        }
    }
    let answers: Vec<_> = seen
        .iter()
        .filter(|l| *l == "sat" || *l == "unsat")
        .collect();
    assert_eq!(answers, ["unsat", "sat"], "full transcript: {seen:?}");

    drop(stdin);
    child.wait().unwrap();
}
